"""Explicit a-priori constants and post-solve verification checks.

The zeroth-order chain is fully explicit: the barrier coefficient A is the
smallest value making the comparison field dominate the right-hand side, and
the sup bound on eps*u follows from A, the diameter and the boundary datum.
Gradient and second-order constants are not explicit; the harness records
the corresponding quantities and enforces only regression bands elsewhere.

check_solution re-derives every per-point quantity through the same
discretization code path the solver used, so the verified numbers are
byte-identical to the solver's.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import VerificationError
from .symfun import binom

BISECTION_TOL = 1e-10
POINT_SLACK = 1e-6


def barrier_margin(n, k, sup_alphas, a_coef):
    """Left side minus right side of the barrier inequality at coefficient a_coef."""
    sup_alphas = np.asarray(sup_alphas, dtype=float)
    ck = binom(n, k) / binom(n, k - 1)
    val = 2.0 * a_coef * ck
    for l in range(k - 1):
        cl = binom(n, l) / binom(n, k - 1)
        val -= sup_alphas[l] * (2.0 * a_coef) ** (-(k - 1 - l)) * cl
    return val - sup_alphas[k - 1]


def barrier_coefficient(n, k, sup_alphas):
    """Smallest A with 2A C_n^k/C_n^{k-1} - sum_l sup(alpha_l) (2A)^{l-k+1}
    C_n^l/C_n^{k-1} >= sup(alpha_{k-1}), located by bisection.

    The left side is increasing in A and tends to -inf at 0+ and +inf at
    infinity, so a root always exists.
    """
    if not 2 <= k <= n:
        raise ValueError(f"order k={k} must satisfy 2 <= k <= n={n}")
    lo, hi = 1.0, 1.0
    while barrier_margin(n, k, sup_alphas, lo) > 0:
        lo *= 0.5
        if lo < 1e-300:
            return 0.0
    while barrier_margin(n, k, sup_alphas, hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise RuntimeError("barrier coefficient bracket failed")
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if barrier_margin(n, k, sup_alphas, mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def zeroth_order_bound(n, k, sup_alphas, max_phi, diam):
    """Explicit bound on sup |eps u|: max(max|phi|, max|phi| + 2A diam + A diam^2)."""
    a_coef = barrier_coefficient(n, k, sup_alphas)
    return max(max_phi, max_phi + 2.0 * a_coef * diam + a_coef * diam**2)


@dataclass
class CheckRecord:
    """One verified bound: outcome, margin (>= 0 passes) and worst point."""

    ok: bool
    margin: float
    worst_point: np.ndarray = None
    applicable: bool = True


@dataclass
class EstimateReport:
    m0: float
    a_barrier: float
    sup_eps_u: float
    sup_du: float
    sup_d2u: float
    max_dnunu: float
    d2_over_normal: float
    c0_ok: bool
    barrier_ok: bool
    ratio_bounds_ok: bool
    trace_bounds_ok: bool
    checks: dict = field(default_factory=dict)


def check_solution(report, p, strict=True):
    """A-priori checks of a converged solve.

    Asserted: the explicit sup|eps u| bound with discretization slack 10h,
    the barrier comparison (the grid minimum of u - 2A|t-t1|^2 attained at a
    band point up to the same slack), the per-point sigma-ratio and
    gradient-trace bounds, and the weighted-trace identity.  Bounds whose
    derivation needs a positive right-hand coefficient are recorded but not
    asserted when inf alpha_{k-1} <= 0.  Raises VerificationError on the
    first asserted failure when strict.
    """
    from . import solver as _solver
    from . import operator as _operator
    from . import symfun as _symfun

    grid = report.solution.grid
    values = report.solution.values
    disc = _solver.Discretization(p, grid)
    n, k = p.n, p.k
    h = grid.h
    checks = {}

    inf_alpha, sup_alpha = disc.inf_alpha, disc.sup_alpha
    rhs_positive = inf_alpha[k - 1] > 0
    a_coef = barrier_coefficient(n, k, sup_alpha)
    max_phi = float(np.abs(disc.phi_b).max())
    m0 = zeroth_order_bound(n, k, sup_alpha, max_phi, p.domain.diam)

    sup_eps_u = p.eps * float(np.abs(values).max())
    slack = 10.0 * h
    checks["c0_bound"] = CheckRecord(
        ok=sup_eps_u <= m0 + slack,
        margin=m0 + slack - sup_eps_u,
        worst_point=grid.points[int(np.argmax(np.abs(values)))],
    )

    delta = grid.points - p.domain.center
    barrier = 2.0 * a_coef * (delta**2).sum(axis=1)
    gap = values - barrier
    min_all = float(gap.min())
    min_band = float(gap[grid.band_ids].min())
    checks["barrier_comparison"] = CheckRecord(
        ok=min_band <= min_all + slack,
        margin=min_all + slack - min_band,
        worst_point=grid.points[int(np.argmin(gap))],
    )

    state = disc.interior_state(values)
    lam = state.lam
    st = _symfun.sigma_table(lam, k)
    denom = st[..., k - 1]
    ratios = st / denom[:, None]
    alpha = disc.alpha_int
    ipts = grid.points[grid.interior_ids]

    lower, upper, ratio_uppers = _operator.quotient_ratio_bounds(
        n, k, inf_alpha, float(sup_alpha.sum())
    )

    def record(name, margins, applicable=True, slack=POINT_SLACK):
        worst = int(np.argmin(margins))
        checks[name] = CheckRecord(
            ok=bool(margins[worst] >= -slack),
            margin=float(margins[worst]),
            worst_point=ipts[worst],
            applicable=applicable,
        )

    for l in range(k - 1):
        record(
            f"ratio_upper_{l}",
            ratio_uppers[l] - ratios[:, l],
            applicable=rhs_positive,
        )
    record("quotient_lower", ratios[:, k] - lower, applicable=rhs_positive)
    record("quotient_upper", upper - ratios[:, k], applicable=rhs_positive)

    trace, weighted = _operator.trace_pair(k, alpha, lam)
    record("trace_lower", trace - (n - k + 1) / k)
    record("trace_upper", (n - k + 1) - trace, applicable=rhs_positive)

    euler_rhs = ratios[:, k].copy()
    weighted_rhs = alpha[:, k - 1].copy()
    for l in range(k - 1):
        euler_rhs += (k - 1 - l) * alpha[:, l] * ratios[:, l]
        weighted_rhs += (k - l) * alpha[:, l] * ratios[:, l]
    scale = 1.0 + np.abs(weighted)
    record("weighted_trace_identity", 1e-10 - np.abs(weighted - euler_rhs) / scale, slack=0.0)
    record("weighted_lower", weighted - alpha[:, k - 1], applicable=rhs_positive)
    record(
        "weighted_trace_equation",
        POINT_SLACK - np.abs(weighted - weighted_rhs) / scale,
        applicable=rhs_positive,
    )

    diags = _solver._diagnostics(disc, values)
    out = EstimateReport(
        m0=m0,
        a_barrier=a_coef,
        sup_eps_u=sup_eps_u,
        sup_du=diags["sup_du"],
        sup_d2u=diags["sup_d2u"],
        max_dnunu=diags["max_dnunu"],
        d2_over_normal=diags["d2_over_normal"],
        c0_ok=checks["c0_bound"].ok,
        barrier_ok=checks["barrier_comparison"].ok,
        ratio_bounds_ok=all(
            c.ok for name, c in checks.items()
            if name.startswith(("ratio_upper", "quotient")) and c.applicable
        ),
        trace_bounds_ok=all(
            c.ok for name, c in checks.items()
            if name.startswith(("trace", "weighted")) and c.applicable
        ),
        checks=checks,
    )
    if strict:
        for name, c in checks.items():
            if c.applicable and not c.ok:
                raise VerificationError(
                    f"bound '{name}' violated by {-c.margin:.3e} at {c.worst_point}",
                    bound=name,
                    worst=c.worst_point,
                    report=out,
                )
    return out
