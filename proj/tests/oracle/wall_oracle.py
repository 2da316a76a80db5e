#!/usr/bin/env python3
"""Reference values for the wall integrals, computed independently of the C++
quadrature.

The integration variable is the wall phase itself: with zeta = zeta(phi),
    int_0^b g(zeta) exp(i phi(zeta)) dzeta
  = int_{phi(b)}^inf g(zeta(phi)) exp(i phi) / |phi'(zeta(phi))| dphi,
an oscillatory integral of period 2 pi that mpmath.quadosc sums with series
acceleration.  Prints C++ initializer rows for the unit tests.
"""
import mpmath as mp

mp.mp.dps = 20

H = mp.mpf('6.62607015e-34')
AMU = mp.mpf('1.66053906660e-27')
HBAR_MEVS = mp.mpf('6.582119569e-13')
LAMBDA_CONST = H / AMU * mp.mpf(10) ** 9      # nm * amu * m/s
KAPPA = 1 / (HBAR_MEVS * mp.mpf(10) ** 9)     # 1/(meV s) -> per (nm m/s)

GRATINGS = {  # d, s0, beta_deg
    'I': (100, 50, mp.mpf('7.5')),
    'II': (100, mp.mpf('67.5'), mp.mpf('8.7')),
    'III': (100, mp.mpf('71.2'), mp.mpf('12.7')),
}


def wall(c3, v, t, beta):
    A = KAPPA * t * mp.cos(beta) * c3 / v
    a = t * mp.tan(beta)

    def p_of_u(u):
        return u**3 * (1 + a * u / 2) / (1 + a * u) ** 2

    def phi(z):
        return A * p_of_u(1 / z)

    def dphi(z):
        u = 1 / z
        L = 3 / u + (a / 2) / (1 + a * u / 2) - 2 * a / (1 + a * u)
        return -A * u * u * p_of_u(u) * L

    def zeta_of(p, hint):
        # phi is increasing in log u; bracket, then Anderson-Bjorck.
        lo = -mp.log(hint)
        while phi(mp.exp(-lo)) > p:
            lo -= 1
        hi = lo + 1
        while phi(mp.exp(-hi)) < p:
            hi += 1
        f = lambda lu: mp.log(A * p_of_u(mp.exp(lu))) - mp.log(p)
        return mp.exp(-mp.findroot(f, (lo, hi), solver='anderson'))

    return phi, dphi, zeta_of


def wall_integral(g, c3, v, t, beta, b):
    """int_0^b g(zeta) exp(i [phi(zeta) - phi(b)]) dzeta.

    Plain quadrature in zeta from b down to where phi = 2 pi + phi(b); the
    phase variable takes over below that point."""
    phi, dphi, zeta_of = wall(c3, v, t, beta)
    pb = phi(b)
    p1 = pb + 2 * mp.pi
    z1 = zeta_of(p1, b)

    def near(z):
        return g(z) * mp.expj(phi(z) - pb)

    # Split the smooth part where the phase has advanced by pi/4.
    cuts = [b]
    while phi(cuts[-1]) + mp.pi / 4 < p1:
        cuts.append(zeta_of(phi(cuts[-1]) + mp.pi / 4, cuts[-1]))
    cuts.append(z1)
    smooth = mp.quad(near, cuts[::-1])

    last = [z1]

    def f(p, part):
        z = zeta_of(p, last[0])
        last[0] = z
        w = g(z) / abs(dphi(z))
        e = mp.expj(p - pb)
        return (e.real if part == 0 else e.imag) * w

    out = []
    for part in (0, 1):
        last[0] = z1
        out.append(mp.quadosc(lambda p: f(p, part), [p1, mp.inf], omega=1))
    return smooth + mp.mpc(out[0], out[1]), pb


def cumulant_r1(c3, v, grating, t):
    d, s0, beta_deg = GRATINGS[grating]
    b = mp.mpf(s0) / 2
    beta = mp.radians(beta_deg)
    i0, _ = wall_integral(lambda z: 1, c3, v, t, beta, b)
    i1, _ = wall_integral(lambda z: z, c3, v, t, beta, b)
    m1 = b - i0
    m2 = b * b - 2 * i1
    return m1, m2 - m1 * m1


def direct_intensity(order, c3, v, grating, t, mass):
    d, s0, beta_deg = GRATINGS[grating]
    b = mp.mpf(s0) / 2
    beta = mp.radians(beta_deg)
    lam = LAMBDA_CONST / (mass * v)
    theta = mp.asin(order * lam / d)
    kappa = 2 * mp.pi / lam * mp.sin(theta)
    val, _ = wall_integral(lambda z: mp.cos(kappa * (b - z)), c3, v, t, beta, b)
    pref = 2 * mp.cos(theta) / mp.sqrt(lam)
    return abs(pref * val) ** 2


def main():
    t = 120
    he = mp.mpf('4.002602')
    print('// c3, v, grating, Re R1, Im R1, Re R2')
    for c3, v, g in [('0.05', 500, 'I'), ('0.15', 1000, 'II'), ('0.3', 2000, 'III'),
                     ('0.1', 300, 'I'), ('0.3', 500, 'III'), ('0.5', 2500, 'II'),
                     ('0.02', 1500, 'III'), ('0.2', 700, 'II'), ('0.4', 350, 'I'),
                     ('0.08', 1200, 'III')]:
        r1, r2 = cumulant_r1(mp.mpf(c3), v, g, t)
        print('{%s, %d, "%s", %s, %s, %s},' % (c3, v, g, mp.nstr(r1.real, 17),
                                              mp.nstr(r1.imag, 17), mp.nstr(r2.real, 17)))
    print('// order, c3, v, grating, |f|^2 (He mass)')
    for n, c3, v, g in [(1, '0.15', 1000, 'I'), (3, '0.15', 1000, 'I'), (2, '0.3', 500, 'II'),
                        (5, '0.05', 2000, 'III'), (8, '0.3', 500, 'I')]:
        val = direct_intensity(n, mp.mpf(c3), v, g, t, he)
        print('{%d, %s, %d, "%s", %s},' % (n, c3, v, g, mp.nstr(val, 17)))


if __name__ == '__main__':
    main()
