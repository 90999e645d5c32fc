"""Piecewise rigid fields on pixel grids.

A field assigns to every masked cell a rigid motion M x + b with M in a
fixed class (zero, rotations, or skew matrices).  Interfaces live on
axis-aligned cell faces; each face carries the jump height evaluated at
its midpoint and a normal quantized to {±e1, ±e2}.  All grids are
anchored to the global lattice h*Z^2 so that independently rasterized
regions tile without misalignment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InternalInvariantError

MOTION_TOL = 1e-12
JUMP_DROP_TOL = 1e-12

KLASS_CONST = "const"
KLASS_SO2 = "so2"
KLASS_SKEW = "skew"


# ---------------------------------------------------------------------------
# grid


@dataclass
class Grid:
    """Axis-aligned cell grid with a boolean region mask.

    Cell (i, j) covers origin + [i*h, (i+1)*h) x [j*h, (j+1)*h); its
    center is origin + ((i+1/2)h, (j+1/2)h).  The mask selects the cells
    belonging to the region (rasterized oriented cubes are masks over
    their bounding box).
    """

    origin: np.ndarray
    h: float
    nx: int
    ny: int
    mask: np.ndarray = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        if self.h <= 0:
            raise InvalidArgumentError("cell size h must be positive")
        if self.nx < 1 or self.ny < 1:
            raise InvalidArgumentError("grid must contain at least one cell")
        if self.mask is None:
            self.mask = np.ones((self.nx, self.ny), dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != (self.nx, self.ny):
                raise InvalidArgumentError("mask shape must be (nx, ny)")
        if not self.mask.any():
            raise InvalidArgumentError("region mask is empty")

    def cell_centers(self) -> np.ndarray:
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        cx, cy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([cx, cy], axis=-1)

    def same_layout(self, other: "Grid") -> bool:
        return (self.nx == other.nx and self.ny == other.ny
                and self.h == other.h
                and np.array_equal(self.origin, other.origin)
                and np.array_equal(self.mask, other.mask))

    def masked_area(self) -> float:
        return float(self.mask.sum()) * self.h * self.h

    def spec(self) -> dict:
        return {"origin": [float(self.origin[0]), float(self.origin[1])],
                "h": self.h, "nx": self.nx, "ny": self.ny,
                "mask": [int(v) for v in self.mask.T.ravel()]}

    @staticmethod
    def from_spec(spec: dict) -> "Grid":
        nx, ny = spec["nx"], spec["ny"]
        mask = np.array(spec["mask"], dtype=bool).reshape(ny, nx).T
        return Grid(np.array(spec["origin"]), spec["h"], nx, ny, mask)


def rotation_for_normal(nu) -> np.ndarray:
    """Proper rotation mapping e2 to the unit vector nu."""
    nu = np.asarray(nu, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-9:
        raise InvalidArgumentError("nu must be a unit vector")
    return np.array([[nu[1], nu[0]], [-nu[0], nu[1]]])


def rasterize_cube(center, rho: float, nu, h: float, extra_margin: float = 0.0) -> Grid:
    """Rasterize the oriented open cube of side rho, normal nu, around center.

    The grid is anchored to h*Z^2 and trimmed to the tight bounding box of
    the masked cells; a cell belongs to the region when its center lies in
    the rotated open cube.  For axis normals and rho/h integer the mask is
    the exact axis-aligned square.
    """
    if rho <= 0 or h <= 0:
        raise InvalidArgumentError("rho and h must be positive")
    center = np.asarray(center, dtype=float)
    R = rotation_for_normal(nu)
    half = rho / 2 + extra_margin
    ext = (np.abs(R[0]) + np.abs(R[1])).max() * half  # bounding half-width
    i0 = math.floor((center[0] - ext) / h)
    j0 = math.floor((center[1] - ext) / h)
    i1 = math.ceil((center[0] + ext) / h)
    j1 = math.ceil((center[1] + ext) / h)
    nx, ny = i1 - i0, j1 - j0
    origin = np.array([i0 * h, j0 * h])
    g = Grid(origin, h, nx, ny)
    c = g.cell_centers() - center
    local = np.einsum("ab,ijb->ija", R.T, c)
    mask = np.all(np.abs(local) < half - 1e-12 * max(1.0, half), axis=-1)
    if not mask.any():
        raise InvalidArgumentError("cube rasterization produced an empty mask")
    ii = np.where(mask.any(axis=1))[0]
    jj = np.where(mask.any(axis=0))[0]
    mask = mask[ii[0]:ii[-1] + 1, jj[0]:jj[-1] + 1]
    origin = origin + np.array([ii[0] * h, jj[0] * h])
    return Grid(origin, h, mask.shape[0], mask.shape[1], mask)


# ---------------------------------------------------------------------------
# rigid motions


@dataclass
class RigidLabel:
    """One rigid motion x -> M x + b with M constrained to a class."""

    M: np.ndarray
    b: np.ndarray
    klass: str = KLASS_CONST

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float).reshape(2, 2)
        self.b = np.asarray(self.b, dtype=float).reshape(2)
        if self.klass == KLASS_CONST:
            if np.abs(self.M).max() != 0.0:
                raise InvalidArgumentError("constant-class label must have M = 0")
        elif self.klass == KLASS_SO2:
            if (np.abs(self.M.T @ self.M - np.eye(2)).max() > 1e-10
                    or abs(np.linalg.det(self.M) - 1.0) > 1e-10):
                raise InvalidArgumentError("so2-class label must carry a rotation")
        elif self.klass == KLASS_SKEW:
            if np.abs(self.M + self.M.T).max() != 0.0:
                raise InvalidArgumentError("skew-class label must satisfy M = -M^T exactly")
        else:
            raise InvalidArgumentError(f"unknown motion class {self.klass!r}")

    def eval(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.M @ x + self.b
        return x @ self.M.T + self.b

    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.M))

    def spec(self) -> dict:
        return {"M": self.M.tolist(), "b": self.b.tolist(), "class": self.klass}

    @staticmethod
    def from_spec(spec: dict) -> "RigidLabel":
        return RigidLabel(np.array(spec["M"]), np.array(spec["b"]), spec["class"])


def constant_label(b) -> RigidLabel:
    return RigidLabel(np.zeros((2, 2)), np.asarray(b, dtype=float), KLASS_CONST)


def skew_label(m: float, b) -> RigidLabel:
    """Skew motion with matrix [[0, m], [-m, 0]] and translation b."""
    return RigidLabel(np.array([[0.0, m], [-m, 0.0]]), np.asarray(b, dtype=float), KLASS_SKEW)


def rotation_label(theta: float, b) -> RigidLabel:
    c, s = math.cos(theta), math.sin(theta)
    return RigidLabel(np.array([[c, -s], [s, c]]), np.asarray(b, dtype=float), KLASS_SO2)


def eval_rigid(label: RigidLabel, x) -> np.ndarray:
    """Evaluate the rigid motion at a point (or an (n, 2) array of points)."""
    return label.eval(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# label fields


@dataclass
class LabelField:
    """Grid assignment of cells to rigid labels.

    assignment[i, j] indexes into labels for masked cells and is -1
    outside the region.  Treated as immutable after construction.
    """

    grid: Grid
    labels: list
    assignment: np.ndarray

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int32)
        if self.assignment.shape != (self.grid.nx, self.grid.ny):
            raise InvalidArgumentError("assignment shape must match the grid")
        a = self.assignment[self.grid.mask]
        if a.size and (a.min() < 0 or a.max() >= len(self.labels)):
            raise InvalidArgumentError("masked cells must carry a valid label index")

    @property
    def klass(self) -> str:
        ks = {l.klass for l in self.labels}
        if len(ks) == 1:
            return ks.pop()
        return KLASS_SKEW if KLASS_SKEW in ks else KLASS_SO2

    def eval_at_centers(self) -> np.ndarray:
        """Field values at masked cell centers; NaN outside the region."""
        out = np.full((self.grid.nx, self.grid.ny, 2), np.nan)
        centers = self.grid.cell_centers()
        for k, lab in enumerate(self.labels):
            sel = (self.assignment == k) & self.grid.mask
            if sel.any():
                out[sel] = lab.eval(centers[sel])
        return out

    def max_grad_norm(self) -> float:
        used = np.unique(self.assignment[self.grid.mask])
        return max((self.labels[k].grad_norm() for k in used), default=0.0)

    def spec(self) -> dict:
        return {"grid": self.grid.spec(),
                "labels": [l.spec() for l in self.labels],
                "assignment": [int(v) for v in self.assignment.T.ravel()]}

    @staticmethod
    def from_spec(spec: dict) -> "LabelField":
        g = Grid.from_spec(spec["grid"])
        labels = [RigidLabel.from_spec(s) for s in spec["labels"]]
        a = np.array(spec["assignment"], dtype=np.int32).reshape(g.ny, g.nx).T
        return LabelField(g, labels, a)

    def to_json(self) -> str:
        return json.dumps(self.spec(), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "LabelField":
        return LabelField.from_spec(json.loads(text))


def _region_reach(grid: Grid) -> float:
    corners = np.array([grid.origin,
                        grid.origin + [grid.nx * grid.h, 0.0],
                        grid.origin + [0.0, grid.ny * grid.h],
                        grid.origin + [grid.nx * grid.h, grid.ny * grid.h]])
    return float(np.abs(corners).max())


def canonicalize(u: LabelField) -> LabelField:
    """Merge labels whose motions agree within MOTION_TOL on the region.

    Produces the pairwise-distinct representation used before any energy
    evaluation; unused labels are dropped and indices compacted.
    """
    reach = max(1.0, _region_reach(u.grid))
    used = np.unique(u.assignment[u.grid.mask])
    rep: list[int] = []           # representative original index per new label
    remap = {}
    for k in used:
        lab = u.labels[k]
        hit = -1
        for r_new, r_orig in enumerate(rep):
            ref = u.labels[r_orig]
            dev = np.abs(lab.b - ref.b).max() + np.abs(lab.M - ref.M).max() * reach
            if dev <= MOTION_TOL:
                hit = r_new
                break
        if hit < 0:
            rep.append(int(k))
            hit = len(rep) - 1
        remap[int(k)] = hit
    if len(rep) == len(u.labels) and all(remap[int(k)] == int(k) for k in used):
        return u
    table = np.full(len(u.labels), -1, dtype=np.int32)
    for orig, new in remap.items():
        table[orig] = new
    a = np.where(u.grid.mask, table[u.assignment], -1)
    return LabelField(u.grid, [u.labels[r] for r in rep], a)


# ---------------------------------------------------------------------------
# jump faces


@dataclass
class JumpFace:
    midpoint: np.ndarray
    normal: np.ndarray
    length: float
    jump: np.ndarray
    labels: tuple


@dataclass
class FaceSet:
    """Vectorized jump-face bundle: arrays indexed per face."""

    midpoints: np.ndarray   # (n, 2)
    normals: np.ndarray     # (n, 2), each ±e1 or ±e2
    jumps: np.ndarray       # (n, 2) value on plus side minus value on minus side
    plus: np.ndarray        # (n,) label index on the side the normal points into
    minus: np.ndarray       # (n,)
    length: float           # common face length h

    def __len__(self):
        return len(self.plus)

    def total_length(self) -> float:
        return len(self.plus) * self.length


def _eval_by_label(labels, idx: np.ndarray, pts: np.ndarray) -> np.ndarray:
    out = np.empty_like(pts)
    for k in np.unique(idx):
        rows = idx == k
        out[rows] = labels[k].eval(pts[rows])
    return out


def face_set(u: LabelField, canonical: bool = True) -> FaceSet:
    """All interior faces separating cells whose motions differ at the midpoint.

    Faces on the region boundary are excluded; faces whose jump magnitude
    does not exceed JUMP_DROP_TOL are dropped (the density is undefined at
    zero jumps).
    """
    if canonical:
        u = canonicalize(u)
    g, a = u.grid, u.assignment
    ox, oy, h = g.origin[0], g.origin[1], g.h

    mids, norms, plus, minus = [], [], [], []

    both = g.mask[:-1, :] & g.mask[1:, :]
    diff = both & (a[:-1, :] != a[1:, :])
    ii, jj = np.nonzero(diff)
    if len(ii):
        mids.append(np.column_stack([ox + (ii + 1.0) * h, oy + (jj + 0.5) * h]))
        norms.append(np.tile([1.0, 0.0], (len(ii), 1)))
        minus.append(a[ii, jj])
        plus.append(a[ii + 1, jj])

    both = g.mask[:, :-1] & g.mask[:, 1:]
    diff = both & (a[:, :-1] != a[:, 1:])
    ii, jj = np.nonzero(diff)
    if len(ii):
        mids.append(np.column_stack([ox + (ii + 0.5) * h, oy + (jj + 1.0) * h]))
        norms.append(np.tile([0.0, 1.0], (len(ii), 1)))
        minus.append(a[ii, jj])
        plus.append(a[ii, jj + 1])

    if not mids:
        z = np.zeros((0, 2))
        return FaceSet(z, z.copy(), z.copy(), np.zeros(0, dtype=int), np.zeros(0, dtype=int), h)

    mids = np.vstack(mids)
    norms = np.vstack(norms)
    plus = np.concatenate(plus)
    minus = np.concatenate(minus)
    jumps = _eval_by_label(u.labels, plus, mids) - _eval_by_label(u.labels, minus, mids)
    keep = np.linalg.norm(jumps, axis=1) > JUMP_DROP_TOL
    return FaceSet(mids[keep], norms[keep], jumps[keep], plus[keep], minus[keep], h)


def jump_faces(u: LabelField) -> list[JumpFace]:
    """Jump set of the field as a list of oriented faces."""
    fs = face_set(u)
    return [JumpFace(fs.midpoints[i], fs.normals[i], fs.length, fs.jumps[i],
                     (int(fs.plus[i]), int(fs.minus[i])))
            for i in range(len(fs))]


def total_jump_length(u: LabelField) -> float:
    return face_set(u).total_length()


def refine(u1: LabelField, u2: LabelField) -> tuple[LabelField, LabelField]:
    """Represent both fields on the common refined partition.

    Cells are regrouped by the pair of original labels; each output keeps
    its own motions, so re-evaluation is unchanged.  The refinement has at
    most |labels1| * |labels2| labels.
    """
    if not u1.grid.same_layout(u2.grid):
        raise InvalidArgumentError("refine requires identical grids")
    k2 = len(u2.labels)
    codes = np.where(u1.grid.mask, u1.assignment.astype(np.int64) * k2 + u2.assignment, -1)
    present = np.unique(codes[u1.grid.mask])
    lut = np.full(int(present.max()) + 1, -1, dtype=np.int32)
    lut[present] = np.arange(len(present), dtype=np.int32)
    a = np.where(u1.grid.mask, lut[np.maximum(codes, 0)], -1)
    lab1 = [u1.labels[int(c) // k2] for c in present]
    lab2 = [u2.labels[int(c) % k2] for c in present]
    return (LabelField(u1.grid, lab1, a), LabelField(u2.grid, lab2, a.copy()))
