"""Independent reference computations used by the tests.

None of these share code with the package paths they check.
"""

import math

import mpmath as mp
import numpy as np


def log_moment_quadrature(q, sigma, alpha, dps=15):
    """log E_{z~N(0,s^2)}[((1-q) + q * N(1,s^2)(z)/N(0,s^2)(z))^alpha] by adaptive quadrature."""
    with mp.workdps(dps):
        q, s = mp.mpf(q), mp.mpf(sigma)

        def f(z):
            return mp.npdf(z, 0, s) * ((1 - q) + q * mp.exp((2 * z - 1) / (2 * s * s))) ** alpha

        # the mass moves right as the order grows; split the line around it
        pts = sorted({-mp.inf, -10 * s, mp.mpf(0), mp.mpf(alpha) / 2, alpha * s * s, mp.inf})
        return float(mp.log(mp.quad(f, pts)))


def rdp_quadrature(sigma, q, steps, orders):
    """(orders, values) of the subsampled Gaussian; integer orders only when q < 1."""
    kept, vals = [], []
    for a in orders:
        if q < 1 and float(a) != int(a):
            continue
        kept.append(float(a))
        if q == 1:
            vals.append(steps * a / (2 * sigma**2))
        else:
            vals.append(steps * log_moment_quadrature(q, sigma, int(a)) / (a - 1))
    return kept, vals


def epsilon_quadrature(sigma, q, steps, delta, orders):
    kept, vals = rdp_quadrature(sigma, q, steps, orders)
    return min(v + math.log(1 / delta) / (a - 1) for a, v in zip(kept, vals))


def welford(values):
    """One-pass mean and population std."""
    n, mean, m2 = 0, 0.0, 0.0
    for x in values:
        n += 1
        d = x - mean
        mean += d / n
        m2 += d * (x - mean)
    return mean, math.sqrt(m2 / n)


def discrete_gaussian_delta(eps, sigma, support):
    """delta(eps) between discrete Gaussians at 0 and 1 on ``support``.

    Privacy loss at outcome x is (1 - 2x) / (2 sigma^2), monotone in x, so the
    worst set is a prefix of the sorted support: sum over {x: loss > eps}.
    """
    with mp.workdps(50):
        w0 = [mp.exp(-mp.mpf(x) ** 2 / (2 * sigma**2)) for x in support]
        w1 = [mp.exp(-(mp.mpf(x) - 1) ** 2 / (2 * sigma**2)) for x in support]
        z0, z1 = sum(w0), sum(w1)
        total = mp.mpf(0)
        for x, a, b in zip(support, w0, w1):
            p, p_adj = a / z0, b / z1
            if mp.log(p / p_adj) > eps:
                total += p - mp.exp(eps) * p_adj
        return float(total)


def fd_gradient(model, x, y, h=1e-5):
    """Central differences of the mean loss, one coordinate at a time."""
    from dpflbench.models import loss

    base = model.params
    out = np.empty_like(base)
    for i in range(len(base)):
        p = base.copy(); p[i] += h
        m = base.copy(); m[i] -= h
        out[i] = (loss(model.with_params(p), x, y) - loss(model.with_params(m), x, y)) / (2 * h)
    return out
