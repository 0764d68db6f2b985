"""Independent high-precision evaluations frozen into the test suite.

Run with `python tests/oracles/derive.py`. Uses mpmath only; nothing here
imports the package, so the numbers check the package rather than echo it.
"""
import mpmath as mp

mp.mp.dps = 40


def phi(u):
    return mp.e ** (-u * u / 2) / mp.sqrt(2 * mp.pi)


def universal():
    i1 = mp.quad(lambda u: u * u * (1 - mp.e ** (u - mp.mpf(1) / 2)) * phi(u), [0, mp.mpf(1) / 2])
    i2 = (1 - mp.e ** -1) * mp.quad(lambda u: u ** 3 * phi(u), [0, mp.mpf(1) / 2])
    c0 = 4 * min(i1, i2)
    p0 = mp.erfc(1 / mp.sqrt(2)) / 2
    ct0 = mp.quad(lambda u: (1 - mp.e ** (u - mp.mpf(1) / 2)) * phi(u), [mp.mpf(1) / 4, mp.mpf(3) / 8]) / 16
    return c0, p0, ct0


def c1(K, R, h, a, c0=mp.mpf("0.007"), p0=mp.mpf("0.15")):
    sh = mp.sqrt(h)
    if a == 0:
        return min(K, 2 * c0 / (R * R + 2 * sh * R + 12 * h)) / 4
    return min(K / (1 + a / R), 2 * c0 / (R * R + 2 * (a + sh) * R), 2 * p0 / h) / 4


def c2(K, lam, R, c0=mp.mpf("0.007")):
    return min(K / 2, 245 * lam ** 2 * R ** 2 / (24 * c0)) * mp.e ** (-49 * lam * R * R / (6 * c0))


def mala_log_accept(x, y, h, amp=mp.mpf("0.1")):
    """min(0, log mu(y) p(y,x) - log mu(x) p(x,y)) straight from the densities."""
    U = lambda z: z * z / 2 + amp * mp.cos(z)
    gV = lambda z: -amp * mp.sin(z)
    s2 = h - h * h / 4
    logp = lambda a, b: -(b - a + h / 2 * (a + gV(a))) ** 2 / (2 * s2)
    return min(0, -U(y) + logp(y, x) + U(x) - logp(x, y))


def onestep_mean(rhat, h):
    """E[R'] for the coupled step, atom plus reflected branch."""
    sd = mp.sqrt(h)
    dens = lambda t: mp.e ** (-t * t / (2 * h)) / mp.sqrt(2 * mp.pi * h) * (1 - mp.e ** ((rhat * t - rhat * rhat / 2) / h))
    return mp.quad(lambda t: (rhat - 2 * t) * dens(t), [-12 * sd, 0, rhat / 2])


if __name__ == "__main__":
    c0, p0, ct0 = universal()
    print("c0", mp.nstr(c0, 15), "p0", mp.nstr(p0, 15), "ctilde0", mp.nstr(ct0, 15))
    print("coalescence at rhat = 2 sqrt h:", mp.nstr(mp.erfc(1 / mp.sqrt(2)), 15))
    h = mp.mpf("0.01")
    print("c1(0)", mp.nstr(c1(1, 1, h, 0), 15), "c1(sqrt h)", mp.nstr(c1(1, 1, h, mp.sqrt(h)), 15))
    print("c2", mp.nstr(c2(1, mp.mpf("0.1"), mp.mpf("0.5")), 15), "q", mp.nstr(7 * mp.mpf("0.1") * mp.mpf("0.5") / mp.mpf("0.007"), 15))
    # Gaussian random walk (b = 0), continuous metric: phi = 1, alpha = c0 min(r, sqrt h) sqrt h,
    # c = (1/4) / ∫_0^R sup_{dual window} Phi / alpha
    R = 1
    sh = mp.sqrt(mp.mpf("0.01"))
    print("grw exact c", mp.nstr(mp.mpf("0.007") * h / (4 * (mp.mpf(R) ** 2 / 2 + sh * R)), 15))
    # toy profile alpha = 1, beta = -r, pi = 1/2 on [0, 1], a = 1, unit windows:
    # r2 solves r^3 = r + 1 and c = (1/4) / ∫_0^r2 (2 + s) ds
    r2 = mp.findroot(lambda r: r ** 3 - r - 1, 1.3)
    print("toy r2", mp.nstr(r2, 16), "toy c", mp.nstr(1 / (4 * (2 * r2 + r2 ** 2 / 2)), 16))
    print("log_accept(0.3, 0.7, 0.1)", mp.nstr(mala_log_accept(mp.mpf("0.3"), mp.mpf("0.7"), mp.mpf("0.1")), 20))
    print("log_accept(0.7, 0.3, 0.1)", mp.nstr(mala_log_accept(mp.mpf("0.7"), mp.mpf("0.3"), mp.mpf("0.1")), 20))
    print("E R' (rhat=0.3, h=0.01)", mp.nstr(onestep_mean(mp.mpf("0.3"), mp.mpf("0.01")), 20))
