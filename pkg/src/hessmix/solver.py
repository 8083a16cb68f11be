"""Damped-Newton solver for the mixed Hessian Neumann problem.

Interior rows discretize the quotient operator with second-order central
differences; every Newton linearization assembles the real symmetric form
A = 1/4 [[P, -Q], [Q, P]] of the Hermitian gradient P + iQ.  Boundary rows
are the embedded collocation of D_nu u + eps u = phi at each band point's
projection, built from the grid's corrected sample operators; they are
linear in u and constant through the Newton iteration.

The epsilon-continuation warm-starts down a decreasing schedule and
extrapolates the Neumann constant c from the last three -eps * mean(u)
values; eps = 0 itself is never solved.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import hessian, operator, symfun
from .errors import AdmissibilityError, ContinuationError, ConvergenceError
from .estimates import barrier_coefficient
from .geometry import INTERIOR

DIRECT_LIMIT = 30_000
ILU_DROP = 1e-3
ILU_FILL = 5
GMRES_BUDGET = 120


@dataclass
class Tolerances:
    residual_tol: float = 1e-10
    cone_margin: float = 1e-8
    max_iterations: int = 40
    min_step: float = 1e-12
    linear_rtol: float = 1e-10


@dataclass
class ProblemData:
    """One Neumann problem: operator order, coefficients, boundary datum, eps."""

    n: int
    k: int
    alphas: list
    phi: object
    eps: float
    domain: object
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if not 2 <= self.k <= self.n:
            raise ValueError(f"order k={self.k} must satisfy 2 <= k <= n={self.n}")
        if len(self.alphas) != self.k:
            raise ValueError(f"need k={self.k} coefficient functions")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")


@dataclass
class ScalarField:
    grid: object
    values: np.ndarray

    def copy(self):
        return ScalarField(self.grid, self.values.copy())

    def mean(self):
        return float(self.values.mean())


@dataclass
class SolveReport:
    solution: ScalarField
    iterations: int
    interior_residual: float
    boundary_residual: float
    admissibility_margin: float
    diagnostics: dict
    residual_history: list


@dataclass
class ContinuationResult:
    schedule: list
    reports: list
    c_values: list
    sup_eps_u: list
    c_extrapolated: float
    v_limit: ScalarField


def check_coefficients(p, grid):
    """Positivity of the operator coefficients alpha_0..alpha_{k-2} at grid
    resolution.  The right-hand coefficient alpha_{k-1} is only recorded: it
    enters the equation as data, not the operator, so solves with signed
    right-hand coefficients (manufactured problems) remain well-posed."""
    pts = grid.points
    inf_alpha = np.empty(p.k)
    sup_alpha = np.empty(p.k)
    for l, fn in enumerate(p.alphas):
        vals = fn(pts)
        inf_alpha[l] = vals.min()
        sup_alpha[l] = vals.max()
        if l <= p.k - 2 and inf_alpha[l] <= 0:
            raise ValueError(f"coefficient alpha_{l} must be positive on the grid")
    return inf_alpha, sup_alpha


def barrier_field(p, grid):
    """Admissible start 2A |t - t1|^2 with t1 the domain center.

    A is the smallest barrier coefficient for the sup norms of the
    coefficients; the field's complex Hessian is 2A I, which dominates the
    right-hand side by construction.
    """
    _, sup_alpha = check_coefficients(p, grid)
    a_coef = barrier_coefficient(p.n, p.k, sup_alpha)
    delta = grid.points - p.domain.center
    return ScalarField(grid, 2.0 * a_coef * (delta**2).sum(axis=1))


@dataclass
class InteriorState:
    """Per-interior-point data shared by residual, Jacobian and checks."""

    d2: np.ndarray         # (m, 2n, 2n) central-difference real Hessians
    lam: np.ndarray        # (m, n) eigenvalues, descending
    u_eig: np.ndarray      # (m, n, n) unitary eigenvectors
    margins: np.ndarray    # (m,) min over i<=k of sigma_i
    g_values: np.ndarray   # (m,)
    gradient: np.ndarray   # (m, n, n) Hermitian G^{ij}


class Discretization:
    """Grid-bound assembly: coefficient samples, boundary operator, rows."""

    def __init__(self, p, grid):
        if grid.domain.n != p.n:
            raise ValueError("grid domain dimension does not match problem")
        self.p = p
        self.grid = grid
        self.inf_alpha, self.sup_alpha = check_coefficients(p, grid)
        self.alpha_int = np.stack(
            [fn(grid.points[grid.interior_ids]) for fn in p.alphas], axis=1
        )
        self.phi_b = p.phi(grid.band_xb)
        self.boundary_op, self.boundary_const = self._boundary_operator()
        self._scatter = sp.coo_matrix(
            (
                np.ones(grid.band_ids.size),
                (grid.band_ids, np.arange(grid.band_ids.size)),
            ),
            shape=(grid.n_unknowns, grid.band_ids.size),
        ).tocsr()
        self._offsets = sorted(grid.stencil_neighbors.keys())

    def _boundary_operator(self):
        """Collocation rows of D_nu u + eps u - phi at each x_b.

        Inside band points difference along their own normal line and carry
        the curvature correction to x_b; outside band points close u(x_b)
        through the Taylor relation on the x_b line.  Both variants are
        exact on quadratic fields and keep every row anchored at its own
        unknown.
        """
        g = self.grid
        h = g.h
        eps = self.p.eps
        r = g.band_r
        nb = g.band_ids.size
        ident = sp.coo_matrix(
            (np.ones(nb), (np.arange(nb), g.band_ids)),
            shape=(nb, g.n_unknowns),
        ).tocsr()
        s1, s2 = g.s1_op, g.s2_op
        inside = r <= 0

        d_hat = (3.0 * ident - 4.0 * s1 + s2) / (2.0 * h)
        q_hat = (ident - 2.0 * s1 + s2) / h**2
        u_b_in = ident - sp.diags(r) @ d_hat + sp.diags(0.5 * r * r) @ q_hat
        rows_in = d_hat - sp.diags(r) @ q_hat + eps * u_b_in

        rho = r / h
        den = 1.0 + 1.5 * rho + 0.5 * rho * rho
        u_b_out = sp.diags(1.0 / den) @ (
            ident
            + sp.diags(2.0 * rho + rho * rho) @ s1
            - sp.diags(0.5 * (rho + rho * rho)) @ s2
        )
        rows_out = (3.0 * u_b_out - 4.0 * s1 + s2) / (2.0 * h) + eps * u_b_out

        sel_in = sp.diags(inside.astype(float))
        sel_out = sp.diags((~inside).astype(float))
        op = (sel_in @ rows_in + sel_out @ rows_out).tocsr()
        op.eliminate_zeros()
        return op, -self.phi_b

    def interior_state(self, values, need_gradient=True):
        g = self.grid
        h = g.h
        n = self.p.n
        d = 2 * n
        nb = g.interior_ids.size
        u0 = values[g.stencil_neighbors[(0,) * d]]
        d2 = np.empty((nb, d, d))
        for p_ax in range(d):
            op = tuple(1 if q == p_ax else 0 for q in range(d))
            om = tuple(-1 if q == p_ax else 0 for q in range(d))
            d2[:, p_ax, p_ax] = (
                values[g.stencil_neighbors[op]]
                - 2.0 * u0
                + values[g.stencil_neighbors[om]]
            ) / h**2
        for p_ax in range(d):
            for q_ax in range(p_ax + 1, d):
                def off(sp_, sq):
                    o = [0] * d
                    o[p_ax] = sp_
                    o[q_ax] = sq
                    return tuple(o)

                val = (
                    values[g.stencil_neighbors[off(1, 1)]]
                    - values[g.stencil_neighbors[off(1, -1)]]
                    - values[g.stencil_neighbors[off(-1, 1)]]
                    + values[g.stencil_neighbors[off(-1, -1)]]
                ) / (4.0 * h**2)
                d2[:, p_ax, q_ax] = val
                d2[:, q_ax, p_ax] = val
        cplx = hessian.to_complex_hessian(d2)
        lam, u_eig, _ = hessian.hermitian_eigen_batch(cplx)
        margins = symfun.cone_margin(self.p.k, lam)
        if np.any(margins <= 0.0):
            worst = int(np.argmin(margins))
            raise AdmissibilityError(
                "interior point left the admissible cone",
                point=g.points[g.interior_ids[worst]],
                sigmas=symfun.sigma_table(lam[worst], self.p.k)[1:],
            )
        g_vals = operator.g_value(self.p.k, self.alpha_int, lam)
        grad = None
        if need_gradient:
            dvec = operator.g_spectral_derivative(self.p.k, self.alpha_int, lam)
            grad = np.einsum("mip,mp,mjp->mij", u_eig, dvec, np.conj(u_eig))
        return InteriorState(
            d2=d2, lam=lam, u_eig=u_eig, margins=margins,
            g_values=np.atleast_1d(g_vals), gradient=grad,
        )

    def residual_parts(self, values, state=None):
        if state is None:
            state = self.interior_state(values, need_gradient=False)
        res_int = state.g_values - self.alpha_int[:, self.p.k - 1]
        res_bnd = self.boundary_op @ values + self.boundary_const
        return res_int, res_bnd, state

    def residual_vector(self, res_int, res_bnd):
        g = self.grid
        out = np.zeros(g.n_unknowns)
        out[g.interior_ids] = res_int
        out[g.band_ids] = res_bnd
        return out

    def jacobian(self, state):
        """Sparse Newton matrix: interior rows from the real form of the
        Hermitian gradient, boundary rows reused verbatim."""
        g = self.grid
        h = g.h
        n = self.p.n
        d = 2 * n
        nb = g.interior_ids.size
        grad = state.gradient
        p_re = grad.real
        q_im = grad.imag
        a_form = np.empty((nb, d, d))
        a_form[:, :n, :n] = p_re
        a_form[:, n:, n:] = p_re
        a_form[:, :n, n:] = -q_im
        a_form[:, n:, :n] = q_im
        a_form *= 0.25

        rows, cols, vals = [], [], []
        rid = g.interior_ids
        diag = np.zeros(nb)
        for p_ax in range(d):
            op = tuple(1 if q == p_ax else 0 for q in range(d))
            om = tuple(-1 if q == p_ax else 0 for q in range(d))
            app = a_form[:, p_ax, p_ax] / h**2
            rows += [rid, rid]
            cols += [g.stencil_neighbors[op], g.stencil_neighbors[om]]
            vals += [app, app]
            diag -= 2.0 * app
        rows.append(rid)
        cols.append(g.stencil_neighbors[(0,) * d])
        vals.append(diag)
        for p_ax in range(d):
            for q_ax in range(p_ax + 1, d):
                def off(sp_, sq):
                    o = [0] * d
                    o[p_ax] = sp_
                    o[q_ax] = sq
                    return tuple(o)

                c = a_form[:, p_ax, q_ax] / (2.0 * h**2)
                rows += [rid] * 4
                cols += [
                    g.stencil_neighbors[off(1, 1)],
                    g.stencil_neighbors[off(1, -1)],
                    g.stencil_neighbors[off(-1, 1)],
                    g.stencil_neighbors[off(-1, -1)],
                ]
                vals += [c, -c, -c, c]
        j_int = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(g.n_unknowns, g.n_unknowns),
        ).tocsr()
        return (j_int + self._scatter @ self.boundary_op).tocsr()


class _LinearSolver:
    """Direct factorization when small, ILU-preconditioned LGMRES otherwise.

    The incomplete factorization is reused across Newton iterations; it is
    refreshed when the Krylov iteration stops converging fast enough.
    """

    def __init__(self, rtol):
        self.rtol = rtol
        self._ilu = None
        self._shape = None

    def reset(self):
        self._ilu = None

    def solve(self, mat, rhs):
        nunk = mat.shape[0]
        scale = 1.0 / np.abs(mat).max(axis=1).toarray().ravel()
        mat_s = (sp.diags(scale) @ mat).tocsr()
        rhs_s = scale * rhs
        if nunk <= DIRECT_LIMIT:
            try:
                lu = spla.splu(mat_s.tocsc())
                x = lu.solve(rhs_s)
                if self._relres(mat_s, x, rhs_s) <= self.rtol:
                    return x
            except (RuntimeError, MemoryError):
                pass
        if self._ilu is None or self._shape != mat.shape:
            self._ilu = spla.spilu(mat_s.tocsc(), drop_tol=ILU_DROP, fill_factor=ILU_FILL)
            self._shape = mat.shape
        for attempt in range(2):
            precond = spla.LinearOperator(mat.shape, self._ilu.solve)
            x, _ = spla.lgmres(
                mat_s, rhs_s, M=precond, rtol=self.rtol / 10.0, atol=0.0,
                maxiter=GMRES_BUDGET,
            )
            if self._relres(mat_s, x, rhs_s) <= self.rtol:
                return x
            # stale preconditioner: rebuild once on the current matrix
            self._ilu = spla.spilu(mat_s.tocsc(), drop_tol=ILU_DROP, fill_factor=ILU_FILL)
        raise ConvergenceError("linear solve failed to reach the requested residual")

    @staticmethod
    def _relres(mat, x, rhs):
        denom = np.linalg.norm(rhs)
        if denom == 0:
            return 0.0
        return np.linalg.norm(mat @ x - rhs) / denom


def residual(u, p):
    """(interior, boundary) residual arrays of a field for problem p.

    Raises AdmissibilityError when any interior point leaves the cone.
    """
    disc = Discretization(p, u.grid)
    res_int, res_bnd, _ = disc.residual_parts(u.values)
    return res_int, res_bnd


def _diagnostics(disc, values):
    g = disc.grid
    h = g.h
    d = 2 * disc.p.n
    state = disc.interior_state(values, need_gradient=False)
    grad_sq = np.zeros(g.interior_ids.size)
    for p_ax in range(d):
        op = tuple(1 if q == p_ax else 0 for q in range(d))
        om = tuple(-1 if q == p_ax else 0 for q in range(d))
        dp = (values[g.stencil_neighbors[op]] - values[g.stencil_neighbors[om]]) / (2 * h)
        grad_sq += dp**2
    sup_du = float(np.sqrt(grad_sq.max())) if grad_sq.size else 0.0
    sup_d2u = float(np.abs(state.d2).max()) if state.d2.size else 0.0
    # one-sided second difference along the normal through the band samples
    ident = values[g.band_ids]
    s1 = g.s1_op @ values
    s2 = g.s2_op @ values
    dnn = (ident - 2.0 * s1 + s2) / h**2
    max_dnn = float(np.abs(dnn).max()) if dnn.size else 0.0
    return {
        "sup_du": sup_du,
        "sup_d2u": sup_d2u,
        "max_dnunu": max_dnn,
        "d2_over_normal": sup_d2u / (1.0 + max_dnn),
    }


def newton_solve(p, u0, _lin=None):
    """Damped Newton iteration from an admissible start.

    Steps are halved until the squared residual norm decreases and every
    interior point keeps the admissibility margin; accepted steps therefore
    never leave the cone.  Stops when the max-norm residual drops below the
    tolerance.  A linear solver may be injected to share its preconditioner
    across related solves (the continuation does this).
    """
    grid = u0.grid
    tol = p.tol
    disc = Discretization(p, grid)
    lin = _lin if _lin is not None else _LinearSolver(tol.linear_rtol)
    values = u0.values.copy()

    state = disc.interior_state(values)
    if np.min(state.margins) < tol.cone_margin:
        raise AdmissibilityError(
            "initial field is not admissible with the required margin",
            point=grid.points[grid.interior_ids[int(np.argmin(state.margins))]],
        )
    res_int, res_bnd, state = disc.residual_parts(values, state)
    norm2 = float(res_int @ res_int + res_bnd @ res_bnd)
    sup = max(
        np.abs(res_int).max() if res_int.size else 0.0,
        np.abs(res_bnd).max() if res_bnd.size else 0.0,
    )
    history = [sup]
    iterations = 0
    while sup > tol.residual_tol:
        if iterations >= tol.max_iterations:
            raise ConvergenceError(
                f"Newton failed to converge in {tol.max_iterations} iterations",
                diagnostics={"residual": sup},
            )
        jac = disc.jacobian(state)
        rhs = -disc.residual_vector(res_int, res_bnd)
        delta = lin.solve(jac, rhs)
        step = 1.0
        while True:
            trial = values + step * delta
            try:
                t_state = disc.interior_state(trial)
                admissible = bool(np.min(t_state.margins) >= tol.cone_margin)
            except AdmissibilityError:
                admissible = False
                t_state = None
            if admissible:
                t_int, t_bnd, t_state = disc.residual_parts(trial, t_state)
                t_norm2 = float(t_int @ t_int + t_bnd @ t_bnd)
                if t_norm2 < norm2:
                    break
            step *= 0.5
            if step < tol.min_step:
                raise ConvergenceError(
                    "line search stalled below the minimum step",
                    diagnostics={"residual": sup, "step": step},
                )
        values = trial
        state = t_state
        res_int, res_bnd = t_int, t_bnd
        norm2 = t_norm2
        sup = max(
            np.abs(res_int).max() if res_int.size else 0.0,
            np.abs(res_bnd).max() if res_bnd.size else 0.0,
        )
        history.append(sup)
        iterations += 1

    sol = ScalarField(grid, values)
    return SolveReport(
        solution=sol,
        iterations=iterations,
        interior_residual=float(np.abs(res_int).max() if res_int.size else 0.0),
        boundary_residual=float(np.abs(res_bnd).max() if res_bnd.size else 0.0),
        admissibility_margin=float(np.min(state.margins)),
        diagnostics=_diagnostics(disc, values),
        residual_history=history,
    )


def extrapolate_to_zero(eps_values, c_values):
    """Value at eps = 0 of the quadratic through the last three (eps, c)."""
    eps_tail = np.asarray(eps_values[-3:], dtype=float)
    c_tail = np.asarray(c_values[-3:], dtype=float)
    if eps_tail.size == 1:
        return float(c_tail[0])
    deg = eps_tail.size - 1
    coef = np.polyfit(eps_tail, c_tail, deg)
    return float(np.polyval(coef, 0.0))


def continue_epsilon(p, schedule, grid):
    """Warm-started solves down a strictly decreasing positive eps schedule.

    c_eps = -eps * mean(u_eps) is recorded per step; the Neumann constant is
    the quadratic extrapolation of the last three values to eps = 0, and the
    limit field is the final solution normalized to zero mean.
    """
    schedule = [float(e) for e in schedule]
    if not schedule or any(e <= 0 for e in schedule):
        raise ValueError("schedule entries must be positive (eps = 0 is extrapolated)")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly decreasing")

    reports = []
    c_values = []
    sup_eps_u = []
    u_start = None
    lin = _LinearSolver(p.tol.linear_rtol)
    for eps in schedule:
        p_eps = replace(p, eps=eps)
        if u_start is None:
            u_start = barrier_field(p_eps, grid)
        try:
            report = newton_solve(p_eps, u_start, _lin=lin)
        except (ConvergenceError, AdmissibilityError) as exc:
            raise ContinuationError(
                f"solve at eps={eps} failed: {exc}",
                partial={
                    "schedule": schedule,
                    "reports": reports,
                    "c_values": c_values,
                    "sup_eps_u": sup_eps_u,
                },
            ) from exc
        reports.append(report)
        c_values.append(-eps * report.solution.mean())
        sup_eps_u.append(eps * float(np.abs(report.solution.values).max()))
        u_start = report.solution.copy()

    c_star = extrapolate_to_zero(schedule, c_values)
    v_vals = reports[-1].solution.values - reports[-1].solution.mean()
    return ContinuationResult(
        schedule=schedule,
        reports=reports,
        c_values=c_values,
        sup_eps_u=sup_eps_u,
        c_extrapolated=c_star,
        v_limit=ScalarField(grid, v_vals),
    )
