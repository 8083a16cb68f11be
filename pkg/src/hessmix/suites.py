"""Seeded property suites for the symmetric-function and operator layers.

Each suite returns a list of PropertyResult records (name, sample count,
worst margin, verdict).  Margins are oriented so that nonnegative-up-to-
tolerance means the property holds; identities report the worst relative
deviation instead.  The CLI identities command writes these as CSV and any
violation flips the exit code.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import hessian, operator, symfun


@dataclass
class PropertyResult:
    name: str
    samples: int
    worst: float        # worst relative violation (0 is perfect)
    tolerance: float

    @property
    def ok(self):
        return self.worst <= self.tolerance


def _rel_excess(lhs, rhs, scale=None):
    """Worst relative amount by which lhs exceeds rhs (0 when lhs <= rhs)."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if scale is None:
        scale = 1.0 + np.maximum(np.abs(lhs), np.abs(rhs))
    exc = (lhs - rhs) / scale
    return float(np.max(exc, initial=0.0))


def _spectra(rng, count, n):
    return rng.standard_normal((count, n))


def _cone_spectra(rng, count, n, m):
    out = np.empty((count, n))
    got = 0
    while got < count:
        cand = rng.standard_normal((4 * count, n)) + float(n)
        good = cand[symfun.cone_margin(m, cand) > 0.0]
        take = min(count - got, good.shape[0])
        out[got : got + take] = good[:take]
        got += take
    return out


def symmetric_function_suite(n_values, samples, seed, sigma_fn=None):
    """Deletion identities, Gamma_m orderings, Newton-MacLaurin chain and the
    brute-force oracle, for every (n, m) with m = 1..n."""
    if sigma_fn is None:
        sigma_fn = symfun.sigma
    results = []
    master = np.random.default_rng(seed)
    for n in n_values:
        for m in range(1, n + 1):
            rng = np.random.default_rng(master.integers(2**63))
            lam = _spectra(rng, samples, n)
            st = np.stack([sigma_fn(i, lam) for i in range(0, m + 1)], axis=-1)
            sw = symfun.sigma_table_without_each(lam, m)
            tag = f"n{n}_m{m}"

            lhs = sw[..., :, m] + lam * sw[..., :, m - 1]
            scale = 1.0 + np.abs(st[..., m, None])
            worst = float((np.abs(lhs - st[..., m, None]) / scale).max())
            results.append(PropertyResult(f"deletion_identity_{tag}", samples, worst, 1e-10))

            lhs = (lam * sw[..., :, m - 1]).sum(axis=-1)
            worst = float((np.abs(lhs - m * st[..., m]) / (1.0 + np.abs(st[..., m]))).max())
            results.append(PropertyResult(f"weighted_deletion_{tag}", samples, worst, 1e-10))

            lhs = sw[..., :, m].sum(axis=-1)
            worst = float((np.abs(lhs - (n - m) * st[..., m]) / (1.0 + np.abs(st[..., m]))).max())
            results.append(PropertyResult(f"complement_identity_{tag}", samples, worst, 1e-10))

            brute = np.zeros(samples)
            if m == 0:
                brute[:] = 1.0
            else:
                for subset in combinations(range(n), m):
                    brute += lam[:, subset].prod(axis=1)
            worst = float(
                (np.abs(sigma_fn(m, lam) - brute) / (1.0 + np.abs(brute))).max()
            )
            results.append(PropertyResult(f"brute_force_{tag}", samples, worst, 1e-12))

            clam = np.sort(_cone_spectra(rng, samples, n, m), axis=1)[:, ::-1]
            csw = symfun.sigma_table_without_each(clam, m)
            red = csw[..., :, m - 1]  # sigma_{m-1}(lam | index i)
            # ordering: reduced values increase from the largest eigenvalue
            # to the smallest, and the smallest of them is positive
            diffs = red[:, :-1] - red[:, 1:]  # red_i - red_{i+1} <= 0 required
            worst = _rel_excess(diffs, 0.0)
            results.append(PropertyResult(f"reduced_ordering_{tag}", samples, worst, 1e-10))
            worst = _rel_excess(-red[:, 0], 0.0)
            results.append(PropertyResult(f"reduced_positive_first_{tag}", samples, worst, 1e-10))

            worst = _rel_excess(-clam[:, :m], 0.0)
            results.append(PropertyResult(f"leading_positive_{tag}", samples, worst, 1e-10))
            cst = symfun.sigma_table(clam, m)
            prod_lead = clam[:, :m].prod(axis=1)
            worst = _rel_excess(cst[:, m], symfun.binom(n, m) * prod_lead)
            results.append(PropertyResult(f"leading_product_bound_{tag}", samples, worst, 1e-10))

            worst = _rel_excess((m / n) * cst[:, m], clam[:, 0] * red[:, 0])
            results.append(PropertyResult(f"leading_share_{tag}", samples, worst, 1e-10))

            worst = _rel_excess(-red[:, m - 1], 0.0)
            results.append(PropertyResult(f"reduced_positivity_weak_{tag}", samples, worst, 1e-10))

            worst = 0.0
            count_nm = 0
            full = symfun.sigma_table(clam, m)
            norm = full / np.array([symfun.binom(n, i) for i in range(m + 1)])
            for mm in range(1, m + 1):
                for ll in range(0, mm):
                    for rr in range(1, mm + 1):
                        for ss in range(0, min(rr, ll + 1)):
                            if mm - ll <= rr - ss:
                                continue  # dominated chains are equalities or reversed
                            lhs = (norm[:, mm] / norm[:, ll]) ** (1.0 / (mm - ll))
                            rhs = (norm[:, rr] / norm[:, ss]) ** (1.0 / (rr - ss))
                            worst = max(worst, _rel_excess(lhs, rhs))
                            count_nm += 1
            if count_nm:
                results.append(PropertyResult(f"newton_maclaurin_{tag}", samples, worst, 1e-10))
    return results


def _random_unitary(rng, count, n):
    z = rng.standard_normal((count, n, n)) + 1j * rng.standard_normal((count, n, n))
    q, r = np.linalg.qr(z)
    phase = np.einsum("bii->bi", r)
    phase = phase / np.abs(phase)
    return q * phase[:, None, :]


def operator_suite(nk_values, samples, seed):
    """Equation-compatible sampling of the operator layer.

    For each (n, k): lambda in Gamma_k, positive alpha_0..alpha_{k-2}, and
    alpha_{k-1} defined by the operator value, keeping only positive
    right-hand sides so every bound's hypothesis holds.
    """
    results = []
    master = np.random.default_rng(seed)
    for n, k in nk_values:
        rng = np.random.default_rng(master.integers(2**63))
        tag = f"n{n}_k{k}"
        lam = _cone_spectra(rng, 2 * samples, n, k)
        alpha = np.zeros((lam.shape[0], k))
        alpha[:, : k - 1] = rng.uniform(0.1, 2.0, size=(lam.shape[0], k - 1))
        gvals = operator.g_value(k, alpha, lam)
        keep = gvals > 0
        lam, alpha, gvals = lam[keep][:samples], alpha[keep][:samples], gvals[keep][:samples]
        alpha[:, k - 1] = gvals
        m = lam.shape[0]

        dvec = operator.g_spectral_derivative(k, alpha, lam)
        worst = _rel_excess(0.0, dvec.min(axis=1))
        results.append(PropertyResult(f"gradient_elliptic_{tag}", m, worst, 1e-12))

        trace, weighted = operator.trace_pair(k, alpha, lam)
        worst = _rel_excess((n - k + 1) / k, trace)
        results.append(PropertyResult(f"trace_lower_{tag}", m, worst, 1e-10))
        worst = _rel_excess(trace, float(n - k + 1))
        results.append(PropertyResult(f"trace_upper_{tag}", m, worst, 1e-10))

        st = symfun.sigma_table(lam, k)
        ratios = st / st[:, k - 1][:, None]
        euler = ratios[:, k].copy()
        weq = alpha[:, k - 1].copy()
        for l in range(k - 1):
            euler += (k - 1 - l) * alpha[:, l] * ratios[:, l]
            weq += (k - l) * alpha[:, l] * ratios[:, l]
        scale = 1.0 + np.abs(weighted)
        worst = float((np.abs(weighted - euler) / scale).max())
        results.append(PropertyResult(f"euler_identity_{tag}", m, worst, 1e-10))
        worst = _rel_excess(alpha[:, k - 1], weighted)
        results.append(PropertyResult(f"weighted_lower_{tag}", m, worst, 1e-10))
        worst = float((np.abs(weighted - weq) / scale).max())
        results.append(PropertyResult(f"weighted_equation_{tag}", m, worst, 1e-10))

        worst = 0.0
        for l in range(k - 1):
            bound = np.maximum(1.0 / alpha[:, l], operator.nm_ratio_constant(n, k, l))
            worst = max(worst, _rel_excess(ratios[:, l], bound))
            worst = max(worst, _rel_excess(0.0, ratios[:, l]))  # positivity
        c_nk = max(operator.nm_ratio_constant(n, k, l) for l in range(k))
        upper = np.maximum(1.0, c_nk * alpha.sum(axis=1))
        worst = max(worst, _rel_excess(ratios[:, k], upper))
        worst = max(worst, _rel_excess(alpha[:, k - 1], ratios[:, k]))
        results.append(PropertyResult(f"quotient_ratio_bounds_{tag}", m, worst, 1e-10))

        worst = 0.0
        for l in range(k - 1):
            worst = max(worst, _rel_excess(-ratios[:, l], 0.0))
        results.append(PropertyResult(f"g_l_negative_{tag}", m, worst, 1e-12))

        # concavity probe on matrix pairs
        half = m // 2
        u1 = _random_unitary(rng, half, n)
        u2 = _random_unitary(rng, half, n)
        h0 = np.einsum("bip,bp,bjp->bij", u1, lam[:half], np.conj(u1))
        h1 = np.einsum("bip,bp,bjp->bij", u2, lam[half : 2 * half], np.conj(u2))
        mid = 0.5 * (h0 + h1)
        lam_mid, _, _ = hessian.hermitian_eigen_batch(mid)
        a_pair = alpha[:half]
        g0v = operator.g_value(k, a_pair, lam[:half])
        g1v = operator.g_value(k, a_pair, lam[half : 2 * half])
        gm = operator.g_value(k, a_pair, lam_mid)
        probe = gm - 0.5 * (g0v + g1v)
        worst = _rel_excess(-probe, 0.0)
        results.append(PropertyResult(f"concavity_midpoint_{tag}", half, worst, 1e-12))

        # spectral gradient against central finite differences
        fd_count = min(m, 100)
        uq = _random_unitary(rng, fd_count, n)
        hmat = np.einsum("bip,bp,bjp->bij", uq, lam[:fd_count], np.conj(uq))
        lam_c, u_c, _ = hessian.hermitian_eigen_batch(hmat)
        dv = operator.g_spectral_derivative(k, alpha[:fd_count], lam_c)
        grad = np.einsum("bip,bp,bjp->bij", u_c, dv, np.conj(u_c))
        step = 1e-5
        worst_fd = 0.0
        gaps = np.abs(np.diff(np.sort(lam_c, axis=1), axis=1)).min(axis=1)
        generic = gaps >= 1e-3
        for i in range(n):
            for j in range(i, n):
                for comp in (0, 1):
                    if i == j and comp == 1:
                        continue
                    direction = np.zeros((n, n), dtype=complex)
                    if comp == 0:
                        direction[i, j] = direction[j, i] = 1.0
                    else:
                        direction[i, j] = 1j
                        direction[j, i] = -1j
                    lp, _, _ = hessian.hermitian_eigen_batch(hmat + step * direction)
                    lm, _, _ = hessian.hermitian_eigen_batch(hmat - step * direction)
                    fd = (
                        operator.g_value(k, alpha[:fd_count], lp)
                        - operator.g_value(k, alpha[:fd_count], lm)
                    ) / (2 * step)
                    if comp == 0:
                        an = 2.0 * grad[:, i, j].real if i != j else grad[:, i, i].real
                    else:
                        an = -2.0 * grad[:, i, j].imag
                    err = np.abs(fd - an) / (1.0 + np.abs(an))
                    tol_vec = np.where(generic, 1e-6, 1e-4)
                    worst_fd = max(worst_fd, float((err / tol_vec).max()))
        results.append(PropertyResult(f"gradient_fd_match_{tag}", fd_count, worst_fd, 1.0))
    return results
