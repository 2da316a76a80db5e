#include "vdwg/minimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vdwg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Problem {
  const ResidualFunction& fn;
  const Eigen::VectorXd& lower;
  const Eigen::VectorXd& upper;
  double step;

  Eigen::VectorXd project(Eigen::VectorXd x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }

  double objective(const Eigen::VectorXd& x, Eigen::VectorXd* r_out = nullptr) const {
    Eigen::VectorXd r = fn(x);
    if (!r.allFinite()) return kInf;
    if (r_out) *r_out = r;
    return r.squaredNorm();
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& r) const {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd J(r.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double h = step * std::max(1.0, std::abs(x[j]));
      Eigen::VectorXd xp = x, xm = x;
      const bool room_up = x[j] + h <= upper[j];
      const bool room_down = x[j] - h >= lower[j];
      if (room_up && room_down) {
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (fn(xp) - fn(xm)) / (2.0 * h);
      } else if (room_up) {
        xp[j] += h;
        J.col(j) = (fn(xp) - r) / h;
      } else {
        xm[j] -= h;
        J.col(j) = (r - fn(xm)) / h;
      }
    }
    return J;
  }
};

struct Vertex {
  Eigen::VectorXd x;
  double f;
};

int nelder_mead(const Problem& p, Vertex& best, double edge, int max_iter) {
  const Eigen::Index n = best.x.size();
  std::vector<Vertex> s;
  s.push_back(best);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x = best.x;
    x[i] += edge;
    x = p.project(x);
    if (x[i] == best.x[i]) x[i] = std::max(p.lower[i], best.x[i] - edge);
    s.push_back({x, p.objective(x)});
  }

  int it = 0;
  for (; it < max_iter; ++it) {
    std::sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    double diameter = 0.0;
    for (std::size_t i = 1; i < s.size(); ++i)
      diameter = std::max(diameter, (s[i].x - s[0].x).lpNorm<Eigen::Infinity>());
    const double spread = s.back().f - s.front().f;
    if (diameter < 1e-7 && spread <= 1e-12 * (std::abs(s.front().f) + 1e-300)) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) centroid += s[i].x;
    centroid /= static_cast<double>(n);
    Vertex& worst = s.back();

    auto trial = [&](double coef) {
      Eigen::VectorXd x = p.project(centroid + coef * (worst.x - centroid));
      return Vertex{x, p.objective(x)};
    };

    Vertex refl = trial(-1.0);
    if (refl.f < s.front().f) {
      Vertex exp = trial(-2.0);
      worst = exp.f < refl.f ? exp : refl;
    } else if (refl.f < s[n - 1].f) {
      worst = refl;
    } else {
      Vertex con = refl.f < worst.f ? trial(-0.5) : trial(0.5);
      if (con.f < std::min(refl.f, worst.f)) {
        worst = con;
      } else {
        for (std::size_t i = 1; i < s.size(); ++i) {
          s[i].x = p.project(s[0].x + 0.5 * (s[i].x - s[0].x));
          s[i].f = p.objective(s[i].x);
        }
      }
    }
  }
  const auto it_best =
      std::min_element(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
  if (it_best->f < best.f) best = *it_best;
  return it;
}

}  // namespace

MinimizerResult minimize_least_squares(const ResidualFunction& residuals,
                                       const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper,
                                       const MinimizerOptions& options) {
  const Problem p{residuals, lower, upper, options.jacobian_step};
  const Eigen::Index n = x0.size();

  MinimizerResult res;
  Vertex start{p.project(x0), 0.0};
  start.f = p.objective(start.x);
  res.initial_objective = start.f;

  Vertex best = start;
  int iterations = 0;
  if (options.max_simplex_iterations > 0)
    iterations += nelder_mead(p, best, options.simplex_size,
                              std::min(options.max_simplex_iterations, options.max_iterations));

  if (!std::isfinite(best.f)) {
    res.x = best.x;
    res.objective = best.f;
    res.iterations = iterations;
    res.at_lower.assign(static_cast<std::size_t>(n), false);
    res.at_upper.assign(static_cast<std::size_t>(n), false);
    res.covariance = Eigen::MatrixXd::Zero(n, n);
    res.message = "objective is not finite anywhere the search visited";
    return res;
  }

  Eigen::VectorXd x = best.x;
  Eigen::VectorXd r;
  double f = p.objective(x, &r);
  double mu = 1e-3;
  Eigen::MatrixXd J;

  // Residuals this far below the starting point are rounding noise.
  const double noise_floor = 1e-24 * std::max(1.0, start.f);

  // A parameter sitting on a bound with the gradient pushing outward is held.
  auto free_indices = [&](const Eigen::VectorXd& g) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool lo = x[j] <= lower[j] && g[j] > 0.0;
      const bool hi = x[j] >= upper[j] && g[j] < 0.0;
      if (!(lo || hi)) idx.push_back(j);
    }
    return idx;
  };
  auto free_columns = [&](const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd Jf(J.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k)
      Jf.col(static_cast<Eigen::Index>(k)) = J.col(idx[k]);
    return Jf;
  };
  // Length of the undamped Gauss-Newton step over the free parameters: the
  // gradient measured in the metric of the local quadratic model.
  auto newton_step = [&](const Eigen::MatrixXd& Jf) {
    if (Jf.cols() == 0) return 0.0;
    const Eigen::MatrixXd A = Jf.transpose() * Jf;
    const Eigen::VectorXd g = Jf.transpose() * r;
    return A.completeOrthogonalDecomposition().solve(g).norm();
  };

  while (iterations < options.max_iterations) {
    ++iterations;
    J = p.jacobian(x, r);
    const auto idx = free_indices(J.transpose() * r);
    const Eigen::MatrixXd Jf = free_columns(idx);
    if (f <= noise_floor || newton_step(Jf) <= 1e-3 * options.gradient_tol) break;

    const auto m = Jf.cols();
    const Eigen::MatrixXd A = Jf.transpose() * Jf;
    const Eigen::VectorXd b = -Jf.transpose() * r;

    bool accepted = false;
    bool stalled = false;
    while (mu < 1e16) {
      Eigen::MatrixXd Ad = A;
      for (Eigen::Index k = 0; k < m; ++k) Ad(k, k) += mu * std::max(A(k, k), 1e-12);
      const Eigen::VectorXd d = Ad.ldlt().solve(b);
      Eigen::VectorXd xn = x;
      for (Eigen::Index k = 0; k < m; ++k) xn[idx[static_cast<std::size_t>(k)]] += d[k];
      xn = p.project(xn);
      Eigen::VectorXd rn;
      const double fn = p.objective(xn, &rn);
      if (fn < f) {
        const double rel = (f - fn) / std::max(f, 1e-300);
        const double step = (xn - x).norm();
        x = xn;
        r = rn;
        f = fn;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        stalled = rel < options.rel_objective_tol && step < options.step_tol;
        break;
      }
      mu *= 4.0;
    }
    // No descent left at working precision, or steps too small to matter.
    if (stalled || !accepted) break;
  }

  // Parameters that creep towards a bound along a flat direction (the
  // objective is often quadratic in the parameter there) are snapped onto it
  // when that does not raise the objective.
  for (Eigen::Index j = 0; j < n; ++j) {
    const double range = upper[j] - lower[j];
    for (const double bound : {lower[j], upper[j]}) {
      if (!std::isfinite(bound) || x[j] == bound) continue;
      if (std::abs(x[j] - bound) > 1e-4 * std::max(1.0, std::isfinite(range) ? range : 1.0))
        continue;
      Eigen::VectorXd xs = x;
      xs[j] = bound;
      Eigen::VectorXd rs;
      const double fs = p.objective(xs, &rs);
      if (fs <= f) {
        x = xs;
        r = rs;
        f = fs;
      }
    }
  }

  if (f > res.initial_objective) {
    x = start.x;
    f = p.objective(x, &r);
  }

  // Final diagnostics at x.
  J = p.jacobian(x, r);
  res.gradient_norm = newton_step(free_columns(free_indices(J.transpose() * r)));
  res.converged =
      std::isfinite(f) && (res.gradient_norm <= options.gradient_tol || f <= noise_floor);
  if (!res.converged)
    res.message = iterations >= options.max_iterations
                      ? "maximum iterations reached"
                      : "stopped with a Gauss-Newton step above tolerance";

  res.x = x;
  res.residuals = r;
  res.objective = f;
  res.jacobian = J;
  res.iterations = iterations;
  res.at_lower.resize(static_cast<std::size_t>(n));
  res.at_upper.resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    res.at_lower[static_cast<std::size_t>(j)] = x[j] <= lower[j];
    res.at_upper[static_cast<std::size_t>(j)] = x[j] >= upper[j];
  }

  // Covariance over parameters not pinned at a bound.
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < n; ++j)
    if (!res.at_lower[static_cast<std::size_t>(j)] && !res.at_upper[static_cast<std::size_t>(j)])
      idx.push_back(j);
  res.covariance = Eigen::MatrixXd::Zero(n, n);
  if (!idx.empty()) {
    const Eigen::MatrixXd Jf = free_columns(idx);
    const Eigen::MatrixXd A = Jf.transpose() * Jf;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const auto ev = es.eigenvalues();
    const double lo = ev.minCoeff();
    const double hi = ev.maxCoeff();
    res.condition_number = lo > 0.0 ? hi / lo : kInf;
    const Eigen::MatrixXd cov = A.completeOrthogonalDecomposition().pseudoInverse();
    const auto m = static_cast<Eigen::Index>(idx.size());
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index c = 0; c < m; ++c)
        res.covariance(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(c)]) =
            cov(a, c);
  }
  return res;
}

}  // namespace vdwg
