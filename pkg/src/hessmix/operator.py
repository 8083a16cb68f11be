"""The mixed Hessian quotient operator and its spectral first derivatives.

For order k with positive weights alpha_0..alpha_{k-2} the operator value at
an eigenvalue vector lam is

    g = sigma_k/sigma_{k-1} - sum_{l<=k-2} alpha_l sigma_l/sigma_{k-1},

which is elliptic and concave on the Gamma_k cone.  The equation reads
g = alpha_{k-1} pointwise; alpha_{k-1} never enters g itself.

All functions broadcast over leading axes; `alpha` has shape (..., k).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConeViolationError
from .symfun import binom, sigma_table, sigma_table_without_each


def _check_orders(k, n):
    if not 1 <= k <= n:
        raise ValueError(f"operator order k={k} out of range 1..{n}")


def _sigma_or_raise(k, lam):
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    _check_orders(k, n)
    st = sigma_table(lam, k)
    denom = st[..., k - 1]
    if np.any(denom <= 0.0):
        flat = np.atleast_1d(denom)
        worst = int(np.argmin(flat))
        raise ConeViolationError(
            f"sigma_{k - 1} <= 0 at batch index {worst}: outside the admissible cone",
            sigmas=np.atleast_2d(st.reshape(-1, k + 1))[worst],
            where=worst,
        )
    return st


def g_value(k, alpha, lam):
    """Operator value sigma_k/sigma_{k-1} - sum_{l<=k-2} alpha_l sigma_l/sigma_{k-1}."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[-1] != k:
        raise ValueError(f"alpha must carry k={k} entries, got {alpha.shape[-1]}")
    st = _sigma_or_raise(k, lam)
    denom = st[..., k - 1]
    val = st[..., k] / denom
    for l in range(k - 1):
        val = val - alpha[..., l] * st[..., l] / denom
    return val if np.ndim(val) else float(val)


def g_spectral_derivative(k, alpha, lam):
    """d_i = dG/dlam_i computed from deleted-index symmetric functions.

    Uses d(sigma_a/sigma_b)/dlam_i
        = [sigma_{a-1}(lam|i) sigma_b - sigma_a sigma_{b-1}(lam|i)] / sigma_b^2
    with sigma_{-1} == 0.  Shape (..., n).
    """
    alpha = np.asarray(alpha, dtype=float)
    lam = np.asarray(lam, dtype=float)
    st = _sigma_or_raise(k, lam)
    sw = sigma_table_without_each(lam, k)  # (..., n, k+1)
    denom = st[..., k - 1, None]
    denom2 = denom * denom
    s_k = st[..., k, None]
    d = (sw[..., k - 1] * denom - s_k * sw[..., k - 2]) / denom2 if k >= 2 else \
        (sw[..., 0] * denom - s_k * 0.0) / denom2
    for l in range(k - 1):
        s_l = st[..., l, None]
        dl_prev = sw[..., l - 1] if l >= 1 else 0.0
        dk2 = sw[..., k - 2] if k >= 2 else 0.0
        d = d - alpha[..., l, None] * (dl_prev * denom - s_l * dk2) / denom2
    return d


def g_gradient(k, alpha, eig):
    """Hermitian gradient matrix U diag(d) U* from an eigen-decomposition.

    `eig` is an EigenResult (or any object with .lam and .u); for symmetric
    functions of eigenvalues the result does not depend on the eigenbasis
    choice inside degenerate eigenspaces, so no special casing is needed.
    """
    d = g_spectral_derivative(k, alpha, eig.lam)
    u = np.asarray(eig.u)
    return np.einsum("...ip,...p,...jp->...ij", u, d, np.conj(u))


@dataclass
class OperatorJet:
    """Value, Hermitian gradient, and the sigma_l/sigma_{k-1} ratio vector."""

    value: float
    gradient: np.ndarray
    ratios: np.ndarray


def operator_jet(k, alpha, eig):
    """Full first-order jet of the operator at one point."""
    st = _sigma_or_raise(k, eig.lam)
    ratios = st / st[..., k - 1, None]
    return OperatorJet(
        value=g_value(k, alpha, eig.lam),
        gradient=g_gradient(k, alpha, eig),
        ratios=ratios,
    )


def trace_pair(k, alpha, lam):
    """(sum_i d_i, sum_i d_i lam_i): trace of the gradient and its weighting.

    The trace equals sum_i G^{ii} because the gradient is U diag(d) U*.
    """
    d = g_spectral_derivative(k, alpha, lam)
    lam = np.asarray(lam, dtype=float)
    return d.sum(axis=-1), (d * lam).sum(axis=-1)


def concavity_gap(k, alpha, h0, h1):
    """G at the matrix midpoint minus the mean of the endpoint values.

    Nonnegative when both endpoints are admissible: the admissible matrices
    form a convex set, so a cone violation at the midpoint signals a bug in
    the caller's inputs.
    """
    from .hessian import hermitian_eigen  # local import to avoid a cycle

    h0 = np.asarray(h0, dtype=complex)
    h1 = np.asarray(h1, dtype=complex)
    mid = 0.5 * (h0 + h1)
    g0 = g_value(k, alpha, hermitian_eigen(h0).lam)
    g1 = g_value(k, alpha, hermitian_eigen(h1).lam)
    gm = g_value(k, alpha, hermitian_eigen(mid).lam)
    return gm - 0.5 * (g0 + g1)


def nm_ratio_constant(n, k, l):
    """Newton-MacLaurin constant bounding sigma_l/sigma_{k-1} when sigma_k/sigma_{k-1} > 1."""
    return binom(n, k) ** (k - 1 - l) * binom(n, l) / binom(n, k - 1) ** (k - l)


def quotient_ratio_bounds(n, k, inf_alpha, sup_alpha_sum):
    """Proof-explicit bounds on the sigma ratios of admissible solutions.

    Returns (lower, upper, ratio_uppers):
      lower        <= sigma_k/sigma_{k-1}; equals inf alpha_{k-1},
      upper        >= sigma_k/sigma_{k-1}; max(1, C(n,k) * sum of sup alpha_l),
      ratio_uppers >= sigma_l/sigma_{k-1} for l = 0..k-2, each the max of the
                      equation-route bound 1/inf alpha_l and the
                      Newton-MacLaurin constant.
    C(n,k) maximizes the Newton-MacLaurin constant over l = 0..k-1 (the
    l = k-1 term contributes 1).
    """
    _check_orders(k, n)
    inf_alpha = np.asarray(inf_alpha, dtype=float)
    if inf_alpha.shape[-1] != k:
        raise ValueError(f"inf_alpha must carry k={k} entries")
    lower = float(inf_alpha[k - 1])
    c_nk = max(nm_ratio_constant(n, k, l) for l in range(k))
    upper = max(1.0, c_nk * float(sup_alpha_sum))
    ratio_uppers = np.array(
        [max(1.0 / inf_alpha[l], nm_ratio_constant(n, k, l)) for l in range(k - 1)]
    )
    return lower, upper, ratio_uppers
