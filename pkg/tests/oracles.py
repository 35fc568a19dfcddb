"""Independent oracles used by the test suite.

These deliberately avoid the solver code paths they are used to check:
dense grids for the dual maximizations, quadrature for posterior CDFs, and
brute-force scans for the h-NPTS acceptance check.
"""

import numpy as np


def grid_kinf_bounded(values, probs, mu, B, grid=100_000):
    """Exhaustive lambda-grid maximum of the bounded dual objective."""
    values = np.asarray(values, float)
    probs = np.asarray(probs, float)
    lams = np.linspace(0.0, 1.0 / (B - mu), grid)
    d = 1.0 - lams[:, None] * (values - mu)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        obj = np.where(np.all(d > 0.0, axis=1), np.log(np.maximum(d, 1e-300)) @ probs,
                       -np.inf)
    return max(0.0, float(obj.max()))


def _power_gstar_rows(lam1, lam2, mu, p, B, centered, eta, gamma):
    """Closed-form feasibility margin for h(x)=x^p; lam1/lam2 broadcast."""
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(lam2 > 0.0, (lam1 / (p * np.maximum(lam2, 1e-300))) ** (1.0 / (p - 1.0)),
                     np.inf)
    shift = 0.0 if centered else -mu  # x* - mu = u + (center - mu)
    return 1.0 - lam1 * (u + shift + eta) - lam2 * (B + gamma - u ** p)


def grid_kinf_hmoment_power(values, probs, mu, p, B, centered, eta=0.0, gamma=0.0,
                            n1=400, n2=400, refine=3):
    """Adaptive (lambda1, lambda2) grid + local refinement for h(x)=x^p.

    Rows are lambda2 levels; each row's lambda1 range is clipped at the
    feasibility boundary found by vectorized bisection on the closed-form
    constraint minimum.
    """
    values = np.asarray(values, float)
    probs = np.asarray(probs, float)
    mean = float(probs @ values)
    if mu <= mean:
        return 0.0
    center = mu if centered else 0.0
    z = B - np.abs(values - center) ** p
    xm = values - mu

    def objective_grid(l1_mat, l2_col):
        # l1_mat: (rows, n1); l2_col: (rows, 1)
        d = 1.0 - l1_mat[:, :, None] * xm[None, None, :] - l2_col[:, :, None] * z[None, None, :]
        ok = np.all(d > 0.0, axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.log(np.maximum(d, 1e-300)) @ probs
        return np.where(ok, val, -np.inf)

    def lam1_boundary(l2):
        lo = np.zeros_like(l2)
        hi = np.ones_like(l2)
        for _ in range(200):
            bad = _power_gstar_rows(hi, l2, mu, p, B, centered, eta, gamma) >= 0.0
            if not bad.any():
                break
            hi = np.where(bad, hi * 2.0, hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            good = _power_gstar_rows(mid, l2, mu, p, B, centered, eta, gamma) >= 0.0
            lo = np.where(good, mid, lo)
            hi = np.where(good, hi, mid)
        return lo

    l2_lo, l2_hi = 0.0, 1.0 / (B + gamma)
    best = 0.0, 0.0, 0.0  # value, lam1, lam2
    frac = np.linspace(0.0, 1.0, n1)
    for level in range(refine):
        l2 = np.linspace(l2_lo, l2_hi, n2)
        if best[2] > 0.0:
            l2 = np.sort(np.append(l2, best[2]))  # keep the incumbent in the grid
        l2 = l2[l2 > 0.0]
        bound = lam1_boundary(l2)
        l1 = bound[:, None] * frac[None, :]
        rows = []
        chunk = max(1, int(2_000_000 / (n1 * max(len(values), 1))))
        for s in range(0, l2.size, chunk):
            rows.append(objective_grid(l1[s:s + chunk], l2[s:s + chunk, None]))
        vals = np.concatenate(rows, axis=0)
        i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[i, j] > best[0]:
            best = float(vals[i, j]), float(l1[i, j]), float(l2[i])
        # zoom the lambda2 window around the incumbent for the next level
        d2 = (l2_hi - l2_lo) / (n2 - 1)
        l2_lo = max(best[2] - 3.0 * d2, 0.0)
        l2_hi = min(best[2] + 3.0 * d2, 1.0 / (B + gamma))
    return best[0]


def ig_posterior_cdf(mean, var, n, alpha, lo, hi, grid=200_001):
    """Quadrature CDF of the density (1 + (x-mean)^2/var)^(-n/2-alpha)."""
    xs = np.linspace(lo, hi, grid)
    dens = (1.0 + (xs - mean) ** 2 / var) ** (-(n / 2.0) - alpha)
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]))))
    cdf /= cdf[-1]
    return xs, cdf


def brute_hnpts_exists(w, X, mu_star, spec, points=400_001, span=None):
    """Flat dense scan for an admissible exploration bonus (slow, simple)."""
    w = np.asarray(w, float)
    X = np.asarray(X, float)
    v = w[-1]
    center = mu_star if spec.centered else 0.0
    z = np.asarray(spec.h(np.abs(X - center)), float)
    mom_base = float(w[:-1] @ z)
    room = (spec.B - mom_base) / v + spec.gamma
    if room < 0:
        return False
    hi = center + float(spec.h_inv(room)) + 1e-9 if span is None else span
    if hi < mu_star:
        hi = mu_star + 1e-9
    xs = np.linspace(mu_star, hi, points)
    zx = np.abs(xs - center)
    mom = mom_base + v * (np.asarray(spec.h(zx), float) - spec.gamma)
    mean_ok = float(w[:-1] @ X) + v * xs >= mu_star - 1e-12
    return bool(np.any(mean_ok & (mom <= spec.B + 1e-12)))
