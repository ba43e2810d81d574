"""Independent brute-force reference implementations used by the tests.

Everything here is deliberately written with plain Python loops and the
math module so it shares no code path with the package's vectorized
internals.
"""

import math


def ind(a, b, ties=False):
    if ties:
        return (1.0 if a < b else 0.0) + (0.5 if a == b else 0.0)
    return 1.0 if a <= b else 0.0


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def normal_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def normal_ppf(p, lo=-12.0, hi=12.0):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def inv_logit(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def brute_mww(z, y, ties=False):
    num, cnt = 0.0, 0
    for i in range(len(z)):
        for j in range(len(z)):
            if z[i] == 1 and z[j] == 0:
                num += ind(y[i], y[j], ties)
                cnt += 1
    return num / cnt


def brute_ipw(z, y, pi, ties=False, hajek=False):
    n = len(z)
    total, wsum = 0.0, 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            wij = z[i] * (1 - z[j]) / (pi[i] * (1.0 - pi[j]))
            wji = z[j] * (1 - z[i]) / (pi[j] * (1.0 - pi[i]))
            total += 0.5 * (wij * ind(y[i], y[j], ties) + wji * ind(y[j], y[i], ties))
            wsum += 0.5 * (wij + wji)
    if hajek:
        return total / wsum
    return total / (n * (n - 1) / 2.0)


def brute_msi(z, y, gfun, ties=False):
    """gfun(i, j) models P(i's treated outcome <= j's control outcome)."""
    n = len(z)
    total = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            rij = z[i] * (1 - z[j])
            rji = z[j] * (1 - z[i])
            total += 0.5 * (rij * ind(y[i], y[j], ties) + (1 - rij) * gfun(i, j))
            total += 0.5 * (rji * ind(y[j], y[i], ties) + (1 - rji) * gfun(j, i))
    return total / (n * (n - 1) / 2.0)


def brute_dr(z, y, pi, gfun, ties=False):
    n = len(z)
    total = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            wij = z[i] * (1 - z[j]) / (pi[i] * (1.0 - pi[j]))
            wji = z[j] * (1 - z[i]) / (pi[j] * (1.0 - pi[i]))
            total += 0.5 * (wij * ind(y[i], y[j], ties) + (1.0 - wij) * gfun(i, j))
            total += 0.5 * (wji * ind(y[j], y[i], ties) + (1.0 - wji) * gfun(j, i))
    return total / (n * (n - 1) / 2.0)


def _pi_of(eta, w_row, intercept_only):
    if intercept_only:
        lin = eta[0]
    else:
        lin = eta[0] + sum(e * v for e, v in zip(eta[1:], w_row))
    return min(max(inv_logit(lin), 1e-6), 1.0 - 1e-6)


def _g_of(gamma, w_first, w_second, link, constant_only):
    if constant_only:
        a = gamma[0]
    else:
        p = len(w_first)
        a = gamma[0] + sum(g * v for g, v in zip(gamma[1:1 + p], w_first)) \
            + sum(g * v for g, v in zip(gamma[1 + p:], w_second))
    val = normal_cdf(a) if link == "probit" else inv_logit(a)
    return min(max(val, 1e-12), 1.0 - 1e-12), a


def _dg_of(a, link):
    if link == "probit":
        return normal_pdf(a)
    p = inv_logit(a)
    return p * (1.0 - p)


def brute_ugee_residual(z, y, w, theta, family="dr", link="probit",
                        intercept_only=False, constant_only=False,
                        ties=False, weighted_delta=True):
    """Stacked estimating function, one explicit loop over unordered pairs,
    normalized by the pair count. Parameter order matches the package:
    (eta block | gamma block | delta)."""
    n = len(z)
    p = len(w[0]) if w and len(w[0]) else 0
    eta_dim = (1 if (intercept_only or p == 0) else 1 + p) if family in ("dr", "ipw") else 0
    gamma_dim = (1 if (constant_only or p == 0) else 1 + 2 * p) if family in ("dr", "msi") else 0
    q = eta_dim + gamma_dim + 1
    eta = theta[:eta_dim]
    gamma = theta[eta_dim:eta_dim + gamma_dim]
    delta = theta[-1]

    U = [0.0] * q
    for i in range(n - 1):
        for j in range(i + 1, n):
            if eta_dim:
                pi_i = _pi_of(eta, w[i], intercept_only)
                pi_j = _pi_of(eta, w[j], intercept_only)
                x_i = [1.0] if (intercept_only or p == 0) else [1.0, *w[i]]
                x_j = [1.0] if (intercept_only or p == 0) else [1.0, *w[j]]
                f1 = 0.5 * (z[i] + z[j])
                h1 = 0.5 * (pi_i + pi_j)
                V1 = 0.25 * (pi_i * (1 - pi_i) + pi_j * (1 - pi_j))
                d1 = [0.5 * (pi_i * (1 - pi_i) * a + pi_j * (1 - pi_j) * b)
                      for a, b in zip(x_i, x_j)]
                for k in range(eta_dim):
                    U[k] += d1[k] * (f1 - h1) / V1
            if gamma_dim:
                g_ij, a_ij = _g_of(gamma, w[i], w[j], link, constant_only or p == 0)
                g_ji, a_ji = _g_of(gamma, w[j], w[i], link, constant_only or p == 0)
                if z[i] != z[j]:
                    if z[i] == 1:
                        g_obs, a_obs = g_ij, a_ij
                        resid = ind(y[i], y[j], ties) - g_obs
                        u = [1.0] if (constant_only or p == 0) else [1.0, *w[i], *w[j]]
                    else:
                        g_obs, a_obs = g_ji, a_ji
                        resid = ind(y[j], y[i], ties) - g_obs
                        u = [1.0] if (constant_only or p == 0) else [1.0, *w[j], *w[i]]
                    dg = _dg_of(a_obs, link)
                    v = g_obs * (1.0 - g_obs)
                    for k in range(gamma_dim):
                        U[eta_dim + k] += dg * u[k] * resid / v

            rij = z[i] * (1 - z[j])
            rji = z[j] * (1 - z[i])
            if family == "ipw":
                pt_ij = pi_i * (1 - pi_j)
                pt_ji = pi_j * (1 - pi_i)
                f3 = 0.5 * (rij / pt_ij * ind(y[i], y[j], ties)
                            + rji / pt_ji * ind(y[j], y[i], ties))
                wdel = 1.0
            elif family == "msi":
                f3 = 0.5 * (rij * ind(y[i], y[j], ties) + (1 - rij) * g_ij
                            + rji * ind(y[j], y[i], ties) + (1 - rji) * g_ji)
                wdel = 1.0
            else:
                pt_ij = pi_i * (1 - pi_j)
                pt_ji = pi_j * (1 - pi_i)
                f3 = 0.5 * (rij / pt_ij * ind(y[i], y[j], ties)
                            + (1.0 - rij / pt_ij) * g_ij
                            + rji / pt_ji * ind(y[j], y[i], ties)
                            + (1.0 - rji / pt_ji) * g_ji)
                V3 = 0.25 * (g_ij * (1 - g_ij) / pt_ij + g_ji * (1 - g_ji) / pt_ji)
                wdel = 1.0 / V3 if weighted_delta else 1.0
            U[q - 1] += wdel * (f3 - delta)
    npairs = n * (n - 1) / 2.0
    return [u / npairs for u in U]
