"""Strictly convex domains in C^n = R^{2n} and Cartesian grid classification.

Supported domains are balls and axis-aligned ellipsoids: both are C^4
strictly convex with closed-form normals, curvatures and nearest-point
projections.  The grid is a uniform cube lattice sized 1.2x the largest
semi-axis.  Points are classified exterior / interior / band:

  * interior points carry the full second-order stencil (axis and cross
    neighbours) inside the closed domain and receive PDE rows;
  * band points are the remaining unknowns near the boundary (inside points
    with a clipped stencil, plus the outside lattice points referenced by
    boundary interpolation).  Each band point carries its boundary
    projection x_b, the outward unit normal there, and interpolation
    stencils for two inward collocation samples spaced h and 2h along -nu;
  * exterior points are never read.

Sample placement: for band points inside the closed domain the samples sit
on the normal line through the band point itself (x_i - h nu, x_i - 2h nu),
for outside band points on the line through the projection (x_b - h nu,
x_b - 2h nu).  Placing inside samples relative to the band point keeps every
boundary row dependent on its own unknown: rows collocated purely at x_b are
identical for band points sharing a normal ray and make the collocation
system singular.

Each sample carries two interpolation operators: the plain multilinear
weights of the containing cell (nonnegative, summing to one), and a
quadratic-corrected operator that subtracts the leading multilinear
interpolation error 0.5 * sum_p xi_p (1 - xi_p) h^2 u_pp, with u_pp taken
from second differences at the nearest interior point.  The corrected
operator is exact on quadratics; without the correction the collocation
truncation carries an O(h^2) one-sided bias that the Neumann problem
amplifies by 1/eps.
"""

from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

BOX_FACTOR = 1.2
WEIGHT_TOL = 1e-14


@dataclass(frozen=True)
class DomainSpec:
    """Ball or axis-aligned ellipsoid in R^{2n}.

    k0 is a lower bound on the complex Hessian of the defining function
    (signed distance for balls, the unnormalized quadratic for ellipsoids);
    kappa_min the minimum principal boundary curvature; diam the diameter.
    """

    kind: str
    n: int
    center: np.ndarray
    radii: np.ndarray
    k0: float
    kappa_min: float
    diam: float

    @property
    def dim(self):
        return 2 * self.n


def ball(n, radius, center=None):
    if radius <= 0:
        raise ValueError("radius must be positive")
    d = 2 * n
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    if c.shape != (d,):
        raise ValueError(f"center must have {d} entries")
    return DomainSpec(
        kind="ball",
        n=n,
        center=c,
        radii=np.full(d, float(radius)),
        k0=1.0 / (4.0 * radius),
        kappa_min=1.0 / radius,
        diam=2.0 * radius,
    )


def ellipsoid(n, radii, center=None):
    d = 2 * n
    a = np.asarray(radii, dtype=float)
    if a.shape != (d,):
        raise ValueError(f"radii must have {d} entries (one per real axis)")
    if np.any(a <= 0):
        raise ValueError("radii must be positive")
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    if c.shape != (d,):
        raise ValueError(f"center must have {d} entries")
    k0 = 0.5 * min(1.0 / a[j] ** 2 + 1.0 / a[n + j] ** 2 for j in range(n))
    return DomainSpec(
        kind="ellipsoid",
        n=n,
        center=c,
        radii=a,
        k0=k0,
        kappa_min=float(a.min() / a.max() ** 2),
        diam=2.0 * float(a.max()),
    )


def defining_function(domain, t):
    """(r, Dr, unit outward normal) at points t, batched over leading axes.

    Ball: r is the signed distance |t - c| - R with |Dr| = 1 away from the
    center; at the center the gradient of the quadratic form (the zero
    vector) is returned instead of the undefined distance gradient.
    Ellipsoid: r is the quadratic sum((t-c)^2/a^2) - 1 with its gradient,
    normalized pointwise for the normal.
    """
    t = np.asarray(t, dtype=float)
    delta = t - domain.center
    if domain.kind == "ball":
        radius = domain.radii[0]
        rho = np.linalg.norm(delta, axis=-1)
        r = rho - radius
        safe = np.where(rho > 0, rho, 1.0)[..., None]
        dr = np.where((rho > 0)[..., None], delta / safe, 0.0)
        return r, dr, dr.copy()
    quad = delta / domain.radii**2
    r = (delta * quad).sum(axis=-1) - 1.0
    dr = 2.0 * quad
    norm = np.linalg.norm(dr, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)[..., None]
    nu = np.where((norm > 0)[..., None], dr / safe, 0.0)
    return r, dr, nu


def boundary_projection(domain, pts):
    """Nearest boundary point and outward unit normal for each row of pts.

    Signed distances returned as the third value (negative inside).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    delta = pts - domain.center
    if domain.kind == "ball":
        radius = domain.radii[0]
        rho = np.linalg.norm(delta, axis=1, keepdims=True)
        if np.any(rho == 0):
            raise ValueError("cannot project the center onto the boundary")
        nu = delta / rho
        return domain.center + radius * nu, nu, rho.ravel() - radius
    a2 = domain.radii**2

    # nearest point y = x a^2/(a^2+mu), mu the root of sum((y/a)^2) = 1
    def fval(mu):
        y = delta * a2 / (a2 + mu[:, None])
        return (y**2 / a2).sum(axis=1) - 1.0

    lo = np.full(pts.shape[0], -0.5 * a2.min())
    hi = np.full(pts.shape[0], 2.0 * a2.max())
    flo = fval(lo)
    fhi = fval(hi)
    grow = 0
    while np.any(fhi > 0):
        hi = np.where(fhi > 0, hi * 2.0, hi)
        fhi = fval(hi)
        grow += 1
        if grow > 60:
            raise ValueError("ellipsoid projection bracket failed to close")
    if np.any(flo < 0):
        raise ValueError("ellipsoid projection bracket invalid (point too deep)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        take_lo = fval(mid) > 0
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)
    mu = 0.5 * (lo + hi)
    xb = domain.center + delta * a2 / (a2 + mu[:, None])
    grad = (xb - domain.center) / a2
    nu = grad / np.linalg.norm(grad, axis=1, keepdims=True)
    dist = np.linalg.norm(pts - xb, axis=1)
    rq, _, _ = defining_function(domain, pts)
    return xb, nu, np.where(rq <= 0, -dist, dist)


def _stencil_offsets(d):
    offs = []
    for p in range(d):
        for s in (-1, 1):
            o = np.zeros(d, dtype=int)
            o[p] = s
            offs.append(tuple(o))
    for p, q in combinations(range(d), 2):
        for sp_, sq in product((-1, 1), repeat=2):
            o = np.zeros(d, dtype=int)
            o[p] = sp_
            o[q] = sq
            offs.append(tuple(o))
    return offs


def _shifted(mask, off, fill=False):
    out = np.full_like(mask, fill)
    src = []
    dst = []
    for o, size in zip(off, mask.shape):
        if o >= 0:
            dst.append(slice(0, size - o))
            src.append(slice(o, size))
        else:
            dst.append(slice(-o, size))
            src.append(slice(0, size + o))
    out[tuple(dst)] = mask[tuple(src)]
    return out


EXTERIOR, INTERIOR, BAND = 0, 1, 2


def _cell_weights(grid_lo, h, npts, samples):
    """Containing-cell corners, multilinear weights and fractions per sample."""
    m, d = samples.shape
    rel = (samples - grid_lo) / h
    base = np.floor(rel).astype(np.int64)
    base = np.clip(base, 0, npts - 2)
    frac = rel - base
    if np.any(frac < -1e-9) or np.any(frac > 1.0 + 1e-9):
        raise ValueError("collocation sample escaped the bounding box")
    frac = np.clip(frac, 0.0, 1.0)
    strides = np.array([npts ** (d - 1 - p) for p in range(d)], dtype=np.int64)
    corner_offsets = np.array(list(product((0, 1), repeat=d)), dtype=np.int64)
    corners = (base[:, None, :] + corner_offsets[None, :, :]) @ strides
    weights = np.ones((m, corner_offsets.shape[0]))
    for p in range(d):
        w_p = np.where(corner_offsets[None, :, p] == 1, frac[:, p, None], 1.0 - frac[:, p, None])
        weights = weights * w_p
    return corners, weights, frac


@dataclass
class Grid:
    """Classified uniform lattice with boundary collocation stencils."""

    domain: DomainSpec
    npts: int
    h: float
    lo: np.ndarray
    shape: tuple
    classification: np.ndarray          # int8 lattice, EXTERIOR/INTERIOR/BAND
    unknown_flat: np.ndarray            # ascending flat lattice ids of unknowns
    unknown_index: np.ndarray           # flat lattice -> unknown id or -1
    points: np.ndarray                  # (n_unknown, d)
    interior_ids: np.ndarray
    band_ids: np.ndarray
    band_r: np.ndarray                  # signed distance of band points
    band_xb: np.ndarray
    band_nu: np.ndarray
    band_near_interior: np.ndarray      # row position into interior_ids
    w1: sp.csr_matrix                   # plain multilinear interpolation, sample 1
    w2: sp.csr_matrix
    s1_op: sp.csr_matrix                # quadratic-corrected interpolation
    s2_op: sp.csr_matrix
    stencil_neighbors: dict = field(repr=False)  # offset -> unknown ids per interior point

    @property
    def n_unknowns(self):
        return self.points.shape[0]

    def axis_coords(self):
        return [self.lo[p] + self.h * np.arange(self.npts) for p in range(len(self.shape))]

    def band_samples(self):
        """The two inward collocation sample points per band point."""
        base = np.where((self.band_r <= 0)[:, None], self.points[self.band_ids], self.band_xb)
        s1 = base - self.h * self.band_nu
        s2 = base - 2.0 * self.h * self.band_nu
        return s1, s2


def _interp_operators(grid_lo, h, npts, samples, unknown_index, near_rowpos, stencil_neighbors, interior_ids, n_unknown):
    """(plain, corrected) csr interpolation operators for the sample points."""
    d = samples.shape[1]
    nb = samples.shape[0]
    corners, weights, frac = _cell_weights(grid_lo, h, npts, samples)
    rows = np.repeat(np.arange(nb), corners.shape[1])
    keep = weights.reshape(-1) > WEIGHT_TOL
    cols = unknown_index[corners.reshape(-1)[keep]]
    if np.any(cols < 0):
        raise RuntimeError("collocation cell references an exterior point")
    plain = sp.coo_matrix(
        (weights.reshape(-1)[keep], (rows[keep], cols)), shape=(nb, n_unknown)
    ).tocsr()
    rows2, cols2, vals2 = [], [], []
    j0 = interior_ids[near_rowpos]
    for p in range(d):
        cp = 0.5 * frac[:, p] * (1.0 - frac[:, p])
        offp = tuple(1 if q == p else 0 for q in range(d))
        offm = tuple(-1 if q == p else 0 for q in range(d))
        jp = stencil_neighbors[offp][near_rowpos]
        jm = stencil_neighbors[offm][near_rowpos]
        rows2 += [np.arange(nb)] * 3
        cols2 += [jp, j0, jm]
        vals2 += [-cp, 2.0 * cp, -cp]
    corr = sp.coo_matrix(
        (np.concatenate(vals2), (np.concatenate(rows2), np.concatenate(cols2))),
        shape=(nb, n_unknown),
    ).tocsr()
    corrected = (plain + corr).tocsr()
    corrected.eliminate_zeros()
    return plain, corrected


def build_grid(domain, npts):
    """Classify the lattice and precompute boundary collocation stencils.

    npts must be odd and at least 9 so the domain center is a lattice point;
    resolutions too coarse for the 1.2x bounding box (or for the inward
    collocation samples to stay inside the domain) raise ValueError.
    """
    if npts < 9 or npts % 2 == 0:
        raise ValueError("points-per-axis must be odd and >= 9")
    d = domain.dim
    a_max = float(domain.radii.max())
    a_min = float(domain.radii.min())
    half = BOX_FACTOR * a_max
    h = 2.0 * half / (npts - 1)
    lo = domain.center - half
    if h > 0.2 * a_max + 1e-12:
        raise ValueError(
            f"domain halo not contained in bounding box at N={npts}; need h <= 0.2*max radius"
        )
    # inward samples go at most (2 + sqrt(2n)) h deep along the normal
    depth = (2.0 + np.sqrt(d)) * h
    if domain.kind == "ellipsoid" and depth > 0.5 * a_min**2 / a_max:
        raise ValueError(f"grid too coarse for inward collocation samples at N={npts}")

    shape = (npts,) * d
    axes = [lo[p] + h * np.arange(npts) for p in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts_lattice = np.stack([m.reshape(-1) for m in mesh], axis=1)
    r_flat, _, _ = defining_function(domain, pts_lattice)
    inside = (r_flat <= 0.0).reshape(shape)

    interior = inside.copy()
    for off in _stencil_offsets(d):
        interior &= _shifted(inside, off, fill=False)
    if not interior.any():
        raise ValueError(f"no interior points at N={npts}; refine the grid")

    inside_flat = inside.reshape(-1)
    band_inside_flat = np.flatnonzero(inside_flat & ~interior.reshape(-1))

    def samples_for(flat_ids):
        pts = pts_lattice[flat_ids]
        xb, nu, r = boundary_projection(domain, pts)
        base = np.where((r <= 0)[:, None], pts, xb)
        return np.concatenate([base - h * nu, base - 2.0 * h * nu], axis=0)

    # Closure over outside lattice points referenced by collocation cells.
    # Corners carrying zero interpolation weight are not references and must
    # not become unknowns.
    outside_band = set()
    active = band_inside_flat
    rounds = 0
    while active.size:
        s_pts = samples_for(active)
        corners, weights, _ = _cell_weights(lo, h, npts, s_pts)
        flat_corners = np.unique(corners.reshape(-1)[weights.reshape(-1) > WEIGHT_TOL])
        out_corners = flat_corners[~inside_flat[flat_corners]]
        new = sorted(int(c) for c in out_corners if c not in outside_band)
        outside_band.update(new)
        active = np.array(new, dtype=np.int64)
        rounds += 1
        if rounds > 12:
            raise RuntimeError("band closure failed to stabilize")

    outside_band_flat = np.array(sorted(outside_band), dtype=np.int64)
    unknown_flat = np.union1d(np.flatnonzero(inside_flat), outside_band_flat)
    unknown_index = np.full(npts**d, -1, dtype=np.int64)
    unknown_index[unknown_flat] = np.arange(unknown_flat.size)

    classification = np.zeros(shape, dtype=np.int8)
    classification[interior] = INTERIOR
    band_mask_flat = np.zeros(npts**d, dtype=bool)
    band_mask_flat[band_inside_flat] = True
    band_mask_flat[outside_band_flat] = True
    classification.reshape(-1)[band_mask_flat] = BAND

    points = pts_lattice[unknown_flat]
    interior_flat = np.flatnonzero(interior.reshape(-1))
    interior_ids = unknown_index[interior_flat]
    band_flat = np.flatnonzero(band_mask_flat)
    band_ids = unknown_index[band_flat]

    band_pts = pts_lattice[band_flat]
    band_xb, band_nu, band_r = boundary_projection(domain, band_pts)

    # Unknown ids of every stencil neighbor of every interior point.
    strides = np.array([npts ** (d - 1 - p) for p in range(d)], dtype=np.int64)
    stencil_neighbors = {}
    for off in [(0,) * d] + _stencil_offsets(d):
        delta = int(np.dot(off, strides))
        ids = unknown_index[interior_flat + delta]
        if np.any(ids < 0):
            raise RuntimeError("interior stencil touched an exterior point")
        stencil_neighbors[off] = ids

    tree = cKDTree(points[interior_ids])
    _, near = tree.query(band_pts)

    n_unknown = unknown_flat.size
    base = np.where((band_r <= 0)[:, None], band_pts, band_xb)
    mats = []
    for mstep in (1, 2):
        s_pts = base - mstep * h * band_nu
        r_s, _, _ = defining_function(domain, s_pts)
        if np.any(r_s > 1e-9):
            raise RuntimeError("inward collocation sample left the domain")
        mats.append(
            _interp_operators(
                lo, h, npts, s_pts, unknown_index, near, stencil_neighbors,
                interior_ids, n_unknown,
            )
        )
    (w1, s1_op), (w2, s2_op) = mats

    return Grid(
        domain=domain,
        npts=npts,
        h=h,
        lo=lo,
        shape=shape,
        classification=classification,
        unknown_flat=unknown_flat,
        unknown_index=unknown_index,
        points=points,
        interior_ids=interior_ids,
        band_ids=band_ids,
        band_r=band_r,
        band_xb=band_xb,
        band_nu=band_nu,
        band_near_interior=near,
        w1=w1,
        w2=w2,
        s1_op=s1_op,
        s2_op=s2_op,
        stencil_neighbors=stencil_neighbors,
    )
