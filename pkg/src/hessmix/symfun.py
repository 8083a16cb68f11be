"""Elementary symmetric functions, reduced variants, and cone membership.

All functions broadcast over leading axes: an input of shape (..., n) is a
stack of eigenvalue vectors and results have shape (...) or (..., m+1).
"""

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import SamplingBudgetError


def sigma_table(lam, upto):
    """All elementary symmetric functions e_0..e_upto of lam along the last axis.

    Uses the one-pass prefix recurrence
        e_m(x_1..x_j) = e_m(x_1..x_{j-1}) + x_j * e_{m-1}(x_1..x_{j-1}),
    which is O(n*upto) and avoids the cancellation blow-up of expanding the
    characteristic polynomial.  Returns shape lam.shape[:-1] + (upto+1,).
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= upto <= n:
        raise ValueError(f"order {upto} out of range for n={n}")
    out = np.zeros(lam.shape[:-1] + (upto + 1,))
    out[..., 0] = 1.0
    for j in range(n):
        top = min(upto, j + 1)
        for m in range(top, 0, -1):
            out[..., m] += lam[..., j] * out[..., m - 1]
    return out


def sigma(m, lam):
    """sigma_m(lam): sum over all m-subsets of products; sigma_0 == 1."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= m <= n:
        raise ValueError(f"sigma order m={m} out of range 0..{n}")
    val = sigma_table(lam, m)[..., m]
    return val if val.ndim else float(val)


def sigma_reduced(m, lam, excluded=()):
    """sigma_m of lam with the excluded entries (0, 1 or 2 indices) set to zero.

    Indices are 1-based, matching the lambda_1..lambda_n naming of eigenvalue
    vectors.  Equivalent to sigma_m of the vector with those entries deleted.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    idx = tuple(excluded)
    if len(idx) > 2:
        raise ValueError("at most two excluded indices are supported")
    if len(set(idx)) != len(idx):
        raise ValueError(f"excluded indices overlap: {idx}")
    for i in idx:
        if not 1 <= i <= n:
            raise ValueError(f"excluded index {i} out of range 1..{n}")
    if not 0 <= m <= n:
        raise ValueError(f"sigma order m={m} out of range 0..{n}")
    keep = [j for j in range(n) if j + 1 not in idx]
    reduced = lam[..., keep]
    if m > len(keep):
        z = np.zeros(lam.shape[:-1])
        return z if z.ndim else 0.0
    return sigma(m, reduced)


def sigma_table_without_each(lam, upto):
    """Table of sigma_m(lam | i) for every deleted index i.

    Returns shape lam.shape[:-1] + (n, upto+1): entry [..., i, m] is sigma_m of
    lam with the i-th eigenvalue removed (zero for m > n-1).  Used by spectral
    derivatives.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    out = np.zeros(lam.shape[:-1] + (n, upto + 1))
    top = min(upto, n - 1)
    for i in range(n):
        keep = [j for j in range(n) if j != i]
        out[..., i, : top + 1] = sigma_table(lam[..., keep], top)
    return out


@dataclass
class ConeCertificate:
    """Cone-membership result: order k, the sigma_1..sigma_k values, verdict."""

    k: int
    sigmas: np.ndarray
    member: bool


def in_cone(k, lam):
    """Strict Garding-cone membership: sigma_i(lam) > 0 for every 1 <= i <= k.

    Zero tolerance by construction (the cone is open); callers wanting a
    safety margin should test the certificate's sigmas against their own
    margin.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if lam.ndim != 1:
        raise ValueError("in_cone expects a single eigenvalue vector")
    if not 1 <= k <= n:
        raise ValueError(f"cone order k={k} out of range 1..{n}")
    sig = sigma_table(lam, k)[1:]
    return ConeCertificate(k=k, sigmas=sig, member=bool(np.all(sig > 0.0)))


def cone_margin(k, lam):
    """min over i<=k of sigma_i(lam), batched; positive iff strictly inside."""
    lam = np.asarray(lam, dtype=float)
    table = sigma_table(lam, k)
    return table[..., 1:].min(axis=-1)


def sample_cone(k, n, seed, count, max_rejections=10**6):
    """Rejection-sample `count` vectors from Gamma_k.

    Proposals are standard normal entries shifted by +n, which lands inside
    the cone most of the time for moderate k; members are kept.  Deterministic
    for a fixed seed.  Raises SamplingBudgetError past `max_rejections`
    rejected proposals.
    """
    if not 1 <= k <= n:
        raise ValueError(f"cone order k={k} out of range 1..{n}")
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng(seed)
    kept = []
    rejections = 0
    block = max(64, count)
    while len(kept) < count:
        lam = rng.standard_normal((block, n)) + float(n)
        margins = cone_margin(k, lam)
        good = lam[margins > 0.0]
        rejections += block - good.shape[0]
        if rejections > max_rejections:
            raise SamplingBudgetError(
                f"cone sampling exceeded {max_rejections} rejections (k={k}, n={n})"
            )
        kept.extend(good[: count - len(kept)])
    return [np.array(v) for v in kept]


def binom(n, m):
    """Binomial coefficient as a float (0 outside the valid range)."""
    if m < 0 or m > n:
        return 0.0
    return float(comb(n, m))
