"""Complex Hessian algebra.

Conversion between the real 2n x 2n Hessian in coordinates t (with
z_j = t_j + i t_{n+j}) and the n x n Hermitian matrix of mixed second
derivatives, plus an in-repo cyclic Jacobi eigensolver for small Hermitian
matrices.  The eigensolver is deliberately dependency-free so results are
bit-reproducible across platforms; everything here is written for stacks of
matrices (leading batch axes) because the grid solver calls it per point.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .symfun import sigma_table

SYMMETRY_RTOL = 1e-14
OFFDIAG_RTOL = 1e-14
MAX_SWEEPS = 100


def to_complex_hessian(d2):
    """Hermitian matrix H_ij = d^2 u / dz_i dzbar_j from the real Hessian.

    With z_j = t_j + i t_{n+j} and D the real derivative,
        H_ij = 1/4 [ (D_ij + D_{n+i,n+j}) + i (D_{i,n+j} - D_{n+i,j}) ] u.
    Input shape (..., 2n, 2n), output (..., n, n).
    """
    d2 = np.asarray(d2, dtype=float)
    two_n = d2.shape[-1]
    if d2.shape[-2] != two_n or two_n % 2 != 0:
        raise ValueError(f"real Hessian must be square of even size, got {d2.shape}")
    scale = 1.0 + np.abs(d2).max(axis=(-2, -1), keepdims=True)
    asym = np.abs(d2 - np.swapaxes(d2, -2, -1))
    if np.any(asym > SYMMETRY_RTOL * scale * 10):
        raise ValueError("real Hessian is asymmetric beyond tolerance")
    n = two_n // 2
    a = d2[..., :n, :n]
    b = d2[..., :n, n:]
    c = d2[..., n:, :n]
    d = d2[..., n:, n:]
    return 0.25 * ((a + d) + 1j * (b - c))


def _check_hermitian(h):
    scale = 1.0 + np.abs(h).max(axis=(-2, -1), keepdims=True)
    dev = np.abs(h - np.conj(np.swapaxes(h, -2, -1)))
    if np.any(dev > SYMMETRY_RTOL * scale * 10):
        raise ValueError("matrix is not Hermitian within tolerance")


def hermitian_eigen_batch(h, max_sweeps=MAX_SWEEPS):
    """Eigen-decomposition of a stack of Hermitian matrices by cyclic Jacobi.

    Returns (lam, u, residual): eigenvalues sorted descending (stable in the
    original index on ties), unitary eigenvector columns, and the per-matrix
    infinity-norm residual of H U - U diag(lam).
    """
    h = np.asarray(h, dtype=complex)
    if h.shape[-1] != h.shape[-2]:
        raise ValueError("expected square matrices")
    _check_hermitian(h)
    orig = h.copy()
    single = h.ndim == 2
    if single:
        h = h[None]
        orig = orig[None]
    batch = h.shape[0] if h.ndim == 3 else int(np.prod(h.shape[:-2]))
    lead = h.shape[:-2]
    n = h.shape[-1]
    a = 0.5 * (h + np.conj(np.swapaxes(h, -2, -1)))  # exact Hermitian part
    a = a.reshape(batch, n, n).copy()
    u = np.broadcast_to(np.eye(n, dtype=complex), (batch, n, n)).copy()

    norm = np.sqrt(np.sum(np.abs(a) ** 2, axis=(1, 2)))
    tol = OFFDIAG_RTOL * np.maximum(norm, np.finfo(float).tiny)
    off_mask = ~np.eye(n, dtype=bool)

    converged = False
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(a[:, off_mask]) ** 2, axis=1))
        if np.all(off <= tol):
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                b = a[:, p, q]
                absb = np.abs(b)
                act = absb > 0.0
                if not np.any(act):
                    continue
                phase = np.ones(batch, dtype=complex)
                phase[act] = b[act] / absb[act]
                app = a[:, p, p].real
                aqq = a[:, q, q].real
                theta = np.zeros(batch)
                theta[act] = (aqq[act] - app[act]) / (2.0 * absb[act])
                sgn = np.where(theta >= 0.0, 1.0, -1.0)
                t = np.where(act, sgn / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # columns: col_p' = c col_p - s conj(phase) col_q ; col_q' = s phase col_p + c col_q
                cp = c[:, None]
                sp = (s * np.conj(phase))[:, None]
                sq = (s * phase)[:, None]
                col_p = a[:, :, p].copy()
                col_q = a[:, :, q].copy()
                a[:, :, p] = cp * col_p - sp * col_q
                a[:, :, q] = sq * col_p + cp * col_q
                row_p = a[:, p, :].copy()
                row_q = a[:, q, :].copy()
                a[:, p, :] = cp * row_p - sq * row_q
                a[:, q, :] = sp * row_p + cp * row_q
                a[:, p, q] = 0.0
                a[:, q, p] = 0.0
                ucol_p = u[:, :, p].copy()
                ucol_q = u[:, :, q].copy()
                u[:, :, p] = cp * ucol_p - sp * ucol_q
                u[:, :, q] = sq * ucol_p + cp * ucol_q
    if not converged:
        off = np.sqrt(np.sum(np.abs(a[:, off_mask]) ** 2, axis=1))
        if np.any(off > tol):
            raise ConvergenceError(
                f"Jacobi sweeps did not converge after {max_sweeps} sweeps"
            )

    lam = np.einsum("bii->bi", a).real.copy()
    # descending sort, stable so ties keep original index order
    order = np.argsort(-lam, axis=1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=1)
    u = np.take_along_axis(u, order[:, None, :], axis=2)

    hu = np.einsum("bij,bjk->bik", orig.reshape(batch, n, n), u)
    ul = u * lam[:, None, :]
    residual = np.abs(hu - ul).max(axis=(1, 2))

    lam = lam.reshape(lead + (n,))
    u = u.reshape(lead + (n, n))
    residual = residual.reshape(lead)
    if single:
        return lam[0], u[0], float(residual[0])
    return lam, u, residual


@dataclass
class EigenResult:
    """Spectrum (descending), unitary eigenvector columns, residual norm."""

    lam: np.ndarray
    u: np.ndarray
    residual: float


def hermitian_eigen(h, max_sweeps=MAX_SWEEPS):
    """EigenResult for a single Hermitian matrix (see hermitian_eigen_batch)."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2:
        raise ValueError("hermitian_eigen expects a single matrix")
    lam, u, res = hermitian_eigen_batch(h, max_sweeps=max_sweeps)
    return EigenResult(lam=lam, u=u, residual=res)


def admissible(k, h, margin=0.0):
    """True iff sigma_i(lam(H)) >= margin for i = 1..k.

    At margin 0 cone-boundary points pass (>= 0); solver code supplies a
    strictly positive margin.
    """
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    eig = hermitian_eigen(h)
    n = eig.lam.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"cone order k={k} out of range 1..{n}")
    sig = sigma_table(eig.lam, k)[1:]
    return bool(np.all(sig >= margin))
