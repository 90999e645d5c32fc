"""Discrete surface, Griffith, and linearized energies.

The surface energy sums the density over jump faces at their midpoints.
Deformation fields are stored per cell corner (a discontinuous bilinear
representation), so piecewise rigid fields embed exactly: their bulk
terms vanish and the surface term reduces to the face sum.  Declared
crack faces partition the differencing stencils; second gradients fall
back to one-sided differences next to cracks and the region boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy_w import w_dist2_so2
from .errors import InternalInvariantError, InvalidArgumentError
from .env import SurfaceDensity
from .fields import Grid, LabelField, face_set


class _InfeasibleEnergy:
    """Tagged +infinity: returned when a hard constraint is violated.

    Never participates in arithmetic; callers test identity against
    INFEASIBLE before using a value.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFEASIBLE"


INFEASIBLE = _InfeasibleEnergy()


@dataclass
class ElasticParams:
    """Scales of the bulk model: strain delta, regularizer exponent beta,
    linearization exponent alpha, microstructure scale epsilon."""

    delta: float = 0.1
    beta: float = 0.8
    alpha: float = 0.5
    epsilon: float = 1.0
    W: str = "dist2_so2"

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise InvalidArgumentError("delta must lie in (0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise InvalidArgumentError("beta must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError("alpha must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise InvalidArgumentError("epsilon must be positive")

    def w(self):
        if self.W == "dist2_so2":
            return w_dist2_so2
        raise InvalidArgumentError(f"unknown elastic density {self.W!r}")


# ---------------------------------------------------------------------------
# surface energy


def surface_energy(u: LabelField, f: SurfaceDensity, epsilon: float,
                   region: np.ndarray | None = None) -> float:
    """Sum of f(mid/epsilon, jump, normal) * h over jump faces.

    `region` optionally restricts to faces both of whose cells lie in the
    given boolean sub-mask of the field's grid.
    """
    if epsilon <= 0:
        raise InvalidArgumentError("epsilon must be positive")
    if region is not None:
        u = _restrict(u, region)
    fs = face_set(u)
    if len(fs) == 0:
        return 0.0
    vals = f.eval_many(fs.midpoints / epsilon, fs.jumps, fs.normals)
    return float(vals.sum() * fs.length)


def _restrict(u: LabelField, region: np.ndarray) -> LabelField:
    region = np.asarray(region, dtype=bool)
    if region.shape != u.grid.mask.shape:
        raise InvalidArgumentError("region mask shape must match the grid")
    mask = u.grid.mask & region
    g = Grid(u.grid.origin, u.grid.h, u.grid.nx, u.grid.ny, mask)
    return LabelField(g, u.labels, np.where(mask, u.assignment, -1))


# ---------------------------------------------------------------------------
# deformation fields


@dataclass
class DeformField:
    """Cell-cornerwise deformation samples with declared crack faces.

    corners[i, j, a, b] is the value at corner (a, b) of cell (i, j)
    (a indexes x1, b indexes x2).  crack_v[i, j] marks the face between
    cells (i, j) and (i+1, j); crack_h[i, j] the face between (i, j) and
    (i, j+1).  Stencils never straddle crack faces.
    """

    grid: Grid
    corners: np.ndarray
    crack_v: np.ndarray = None
    crack_h: np.ndarray = None

    def __post_init__(self):
        g = self.grid
        self.corners = np.asarray(self.corners, dtype=float)
        if self.corners.shape != (g.nx, g.ny, 2, 2, 2):
            raise InvalidArgumentError("corners must have shape (nx, ny, 2, 2, 2)")
        if self.crack_v is None:
            self.crack_v = np.zeros((g.nx - 1, g.ny), dtype=bool)
        if self.crack_h is None:
            self.crack_h = np.zeros((g.nx, g.ny - 1), dtype=bool)
        self.crack_v = np.asarray(self.crack_v, dtype=bool)
        self.crack_h = np.asarray(self.crack_h, dtype=bool)
        if self.crack_v.shape != (g.nx - 1, g.ny) or self.crack_h.shape != (g.nx, g.ny - 1):
            raise InvalidArgumentError("crack masks must have interior-face shapes")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def from_nodes(grid: Grid, nodes: np.ndarray,
                   crack_v: np.ndarray | None = None,
                   crack_h: np.ndarray | None = None) -> "DeformField":
        """Build from single-valued node samples of shape (nx+1, ny+1, 2)."""
        nodes = np.asarray(nodes, dtype=float)
        if nodes.shape != (grid.nx + 1, grid.ny + 1, 2):
            raise InvalidArgumentError("nodes must have shape (nx+1, ny+1, 2)")
        corners = np.empty((grid.nx, grid.ny, 2, 2, 2))
        corners[:, :, 0, 0] = nodes[:-1, :-1]
        corners[:, :, 1, 0] = nodes[1:, :-1]
        corners[:, :, 0, 1] = nodes[:-1, 1:]
        corners[:, :, 1, 1] = nodes[1:, 1:]
        return DeformField(grid, corners, crack_v, crack_h)

    @staticmethod
    def from_callable(grid: Grid, fn, crack_v=None, crack_h=None) -> "DeformField":
        """Sample y = fn(points) (vectorized over (n, 2) arrays) at cell corners."""
        g = grid
        xs = g.origin[0] + np.arange(g.nx + 1) * g.h
        ys = g.origin[1] + np.arange(g.ny + 1) * g.h
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        nodes = np.asarray(fn(pts), dtype=float).reshape(g.nx + 1, g.ny + 1, 2)
        return DeformField.from_nodes(grid, nodes, crack_v, crack_h)

    @staticmethod
    def from_label_field(u: LabelField) -> "DeformField":
        """Exact embedding of a piecewise rigid field; its jump faces become cracks."""
        g = u.grid
        xs = g.origin[0] + np.arange(g.nx + 1) * g.h
        ys = g.origin[1] + np.arange(g.ny + 1) * g.h
        corners = np.zeros((g.nx, g.ny, 2, 2, 2))
        for k, lab in enumerate(u.labels):
            sel = (u.assignment == k) & g.mask
            if not sel.any():
                continue
            ii, jj = np.nonzero(sel)
            for a in (0, 1):
                for b in (0, 1):
                    pts = np.column_stack([xs[ii + a], ys[jj + b]])
                    corners[ii, jj, a, b] = lab.eval(pts)
        a = u.assignment
        crack_v = g.mask[:-1, :] & g.mask[1:, :] & (a[:-1, :] != a[1:, :])
        crack_h = g.mask[:, :-1] & g.mask[:, 1:] & (a[:, :-1] != a[:, 1:])
        return DeformField(g, corners, crack_v, crack_h)

    # -- derived quantities -------------------------------------------------

    def gradients(self) -> np.ndarray:
        """Per-cell deformation gradient F[i, j] with F[r, c] = dy_r/dx_c."""
        h = self.grid.h
        c = self.corners
        dx = (c[:, :, 1, 0] + c[:, :, 1, 1] - c[:, :, 0, 0] - c[:, :, 0, 1]) / (2 * h)
        dy = (c[:, :, 0, 1] + c[:, :, 1, 1] - c[:, :, 0, 0] - c[:, :, 1, 0]) / (2 * h)
        return np.stack([dx, dy], axis=-1)  # (nx, ny, 2(component), 2(direction))

    def second_gradient_sq(self) -> np.ndarray:
        """Per-cell |grad F|^2 with one-sided stencils at cracks and boundary."""
        g = self.grid
        h = self.grid.h
        F = self.gradients()
        link_x = g.mask[:-1, :] & g.mask[1:, :] & ~self.crack_v
        link_y = g.mask[:, :-1] & g.mask[:, 1:] & ~self.crack_h
        out = np.zeros((g.nx, g.ny))
        for axis, link in ((0, link_x), (1, link_y)):
            fwd = np.zeros((g.nx, g.ny), dtype=bool)
            bwd = np.zeros((g.nx, g.ny), dtype=bool)
            if axis == 0:
                fwd[:-1, :] = link
                bwd[1:, :] = link
                Fp = np.roll(F, -1, axis=0)
                Fm = np.roll(F, 1, axis=0)
            else:
                fwd[:, :-1] = link
                bwd[:, 1:] = link
                Fp = np.roll(F, -1, axis=1)
                Fm = np.roll(F, 1, axis=1)
            d = np.zeros_like(F)
            central = fwd & bwd
            d[central] = (Fp[central] - Fm[central]) / (2 * h)
            only_f = fwd & ~bwd
            d[only_f] = (Fp[only_f] - F[only_f]) / h
            only_b = bwd & ~fwd
            d[only_b] = (F[only_b] - Fm[only_b]) / h
            out += (d ** 2).sum(axis=(-2, -1))
        return out

    def trace_minus_v(self, i, j):
        return 0.5 * (self.corners[i, j, 1, 0] + self.corners[i, j, 1, 1])

    def trace_plus_v(self, i, j):
        return 0.5 * (self.corners[i + 1, j, 0, 0] + self.corners[i + 1, j, 0, 1])

    def trace_minus_h(self, i, j):
        return 0.5 * (self.corners[i, j, 0, 1] + self.corners[i, j, 1, 1])

    def trace_plus_h(self, i, j):
        return 0.5 * (self.corners[i, j + 1, 0, 0] + self.corners[i, j + 1, 1, 0])

    def crack_faces(self):
        """(midpoints, normals, jumps) over declared crack faces."""
        g = self.grid
        h = g.h
        mids, norms, jumps = [], [], []
        ii, jj = np.nonzero(self.crack_v & g.mask[:-1, :] & g.mask[1:, :])
        if len(ii):
            mids.append(np.column_stack([g.origin[0] + (ii + 1.0) * h,
                                         g.origin[1] + (jj + 0.5) * h]))
            norms.append(np.tile([1.0, 0.0], (len(ii), 1)))
            jumps.append(self.trace_plus_v(ii, jj) - self.trace_minus_v(ii, jj))
        ii, jj = np.nonzero(self.crack_h & g.mask[:, :-1] & g.mask[:, 1:])
        if len(ii):
            mids.append(np.column_stack([g.origin[0] + (ii + 0.5) * h,
                                         g.origin[1] + (jj + 1.0) * h]))
            norms.append(np.tile([0.0, 1.0], (len(ii), 1)))
            jumps.append(self.trace_plus_h(ii, jj) - self.trace_minus_h(ii, jj))
        if not mids:
            z = np.zeros((0, 2))
            return z, z.copy(), z.copy()
        return np.vstack(mids), np.vstack(norms), np.vstack(jumps)

    def nodes_csv(self) -> str:
        """Node-value dump (averaged across coincident corners), row-major in x2."""
        g = self.grid
        nodes = np.zeros((g.nx + 1, g.ny + 1, 2))
        weight = np.zeros((g.nx + 1, g.ny + 1))
        for a in (0, 1):
            for b in (0, 1):
                np.add.at(nodes, (slice(a, g.nx + a), slice(b, g.ny + b)),
                          self.corners[:, :, a, b])
                weight[a:g.nx + a, b:g.ny + b] += 1.0
        nodes /= np.maximum(weight, 1.0)[..., None]
        lines = []
        for j in range(g.ny + 1):
            lines.append(",".join(f"{nodes[i, j, 0]!r};{nodes[i, j, 1]!r}"
                                  for i in range(g.nx + 1)))
        return "\n".join(lines) + "\n"


def _crack_surface_term(y: DeformField, f: SurfaceDensity, epsilon: float) -> float:
    mids, norms, jumps = y.crack_faces()
    if len(mids) == 0:
        return 0.0
    mag = np.linalg.norm(jumps, axis=1)
    keep = mag > 1e-12
    if not keep.any():
        return 0.0
    vals = f.eval_many(mids[keep] / epsilon, jumps[keep], norms[keep])
    return float(vals.sum() * y.grid.h)


def griffith_energy(y: DeformField, f: SurfaceDensity, p: ElasticParams) -> float:
    """Bulk elastic + second-gradient + surface energy of a deformation.

    delta^-2 * integral W(grad y) + delta^-2beta * integral |grad^2 y|^2
    plus the density summed over declared crack faces with the trace jump.
    """
    g = y.grid
    area = g.h * g.h
    W = p.w()(y.gradients()[g.mask])
    bulk = float(W.sum()) * area / p.delta ** 2
    reg = float(y.second_gradient_sq()[g.mask].sum()) * area / p.delta ** (2 * p.beta)
    return bulk + reg + _crack_surface_term(y, f, p.epsilon)


def linearized_energy(u: DeformField, f: SurfaceDensity, p: ElasticParams):
    """Small-strain energy of a displacement field, or INFEASIBLE.

    Returns the tagged sentinel as soon as any cell violates the gradient
    cap |grad u| <= delta^(-alpha/4), with |.| the max-entry norm (the
    norm the slicing arguments use on skew matrices); otherwise
    delta^-2 * integral W(I + delta^alpha grad u)
    + delta^(2(alpha-beta)) * integral |grad^2 u|^2 + surface term.
    """
    g = u.grid
    F = u.gradients()
    gnorm = np.abs(F[g.mask]).max(axis=(-2, -1)) if g.mask.any() else np.zeros(0)
    if gnorm.size and gnorm.max() > p.delta ** (-p.alpha / 4):
        return INFEASIBLE
    area = g.h * g.h
    A = np.eye(2) + p.delta ** p.alpha * F[g.mask]
    bulk = float(p.w()(A).sum()) * area / p.delta ** 2
    reg = float(u.second_gradient_sq()[g.mask].sum()) * area * p.delta ** (2 * (p.alpha - p.beta))
    return bulk + reg + _crack_surface_term(u, f, p.epsilon)
