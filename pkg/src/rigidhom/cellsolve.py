"""Minimal-interface cell problems on rasterized oriented cubes.

The two-label problem (boundary jump datum against zero) is solved
exactly as an s-t min cut on the grid graph with face weights given by
the density; multi-label skew dictionaries are handled by exact pairwise
swap moves (each an embedded min cut) plus optional annealing, which
yields a certified local minimum together with a min-cut relaxation
lower bound.  Gluing and the bounded-label truncation used by the
convergence arguments are provided as field surgeries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .env import EnvSeed, SurfaceDensity, density_from_spec
from .errors import InternalInvariantError, InvalidArgumentError
from .energy import surface_energy
from .fields import (
    Grid,
    KLASS_CONST,
    KLASS_SKEW,
    KLASS_SO2,
    LabelField,
    RigidLabel,
    canonicalize,
    constant_label,
    face_set,
    rasterize_cube,
    rotation_label,
)

AXIS_NU_TOL = 1e-12


# ---------------------------------------------------------------------------
# problems and results


@dataclass
class CellProblem:
    """One minimisation instance: jump datum on an oriented cube.

    The competitor class is fixed by `klass`: piecewise constants
    ("const"), identity plus piecewise constants ("so2"), or piecewise
    skew-affine motions ("skew").  Cells within `band_width` of the
    region boundary are frozen to the datum.
    """

    center: tuple
    size: float
    nu: tuple
    zeta: tuple
    density: SurfaceDensity
    x: tuple | None = None          # datum base point; defaults to center
    klass: str = KLASS_CONST
    epsilon: float = 1.0
    h: float = 0.25
    band_width: int = 1
    truncation_k: float | None = None
    region: Grid | None = None      # explicit solve region, overriding the cube

    def __post_init__(self):
        if self.size <= 0 or self.h <= 0 or self.epsilon <= 0:
            raise InvalidArgumentError("size, h and epsilon must be positive")
        if self.band_width < 1:
            raise InvalidArgumentError("band width must be at least one cell")
        if self.x is None:
            self.x = tuple(self.center)

    def is_oblique(self) -> bool:
        nu = np.asarray(self.nu, dtype=float)
        return min(abs(abs(nu[0]) - 1.0), abs(abs(nu[1]) - 1.0)) > AXIS_NU_TOL

    def datum_labels(self) -> list:
        if self.klass in (KLASS_CONST, KLASS_SKEW):
            return [constant_label((0.0, 0.0)), constant_label(self.zeta)]
        if self.klass == KLASS_SO2:
            return [rotation_label(0.0, (0.0, 0.0)), rotation_label(0.0, self.zeta)]
        raise InvalidArgumentError(f"unknown competitor class {self.klass!r}")

    def spec(self) -> dict:
        out = {"center": list(self.center), "size": self.size, "nu": list(self.nu),
               "zeta": list(self.zeta), "x": list(self.x), "klass": self.klass,
               "epsilon": self.epsilon, "h": self.h, "band_width": self.band_width,
               "truncation_k": self.truncation_k,
               "density": self.density.spec()}
        if self.region is not None:
            out["region"] = self.region.spec()
        return out

    @staticmethod
    def from_spec(spec: dict) -> "CellProblem":
        d = dict(spec)
        d["density"] = density_from_spec(d["density"])
        if d.get("region") is not None:
            d["region"] = Grid.from_spec(d["region"])
        for key in ("center", "nu", "zeta", "x"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return CellProblem(**d)


@dataclass
class CellResult:
    energy: float
    field: LabelField
    solver: str
    certificate: float | None = None
    gap: float | None = None
    exact: bool = True
    oblique: bool = False

    def spec(self) -> dict:
        return {"energy": self.energy, "solver": self.solver,
                "certificate": self.certificate, "gap": self.gap,
                "exact": self.exact, "oblique": self.oblique,
                "field": self.field.spec()}

    @staticmethod
    def from_spec(spec: dict) -> "CellResult":
        d = dict(spec)
        d["field"] = LabelField.from_spec(d["field"])
        return CellResult(**d)


@dataclass
class LocalSchedule:
    """Move schedule for the heuristic solver: exact pairwise swaps, an
    optional annealing exploration, then single-cell descent."""

    swap_rounds: int = 4
    anneal_steps: int = 0
    t_start: float = 2.0
    t_end: float = 0.02
    icm_rounds: int = 6
    certificate_max_labels: int = 12


# ---------------------------------------------------------------------------
# frozen bands and boundary fields


def frozen_band(grid: Grid, width: int) -> np.ndarray:
    """Masked cells within `width` cells of the region boundary."""
    interior = ndimage.binary_erosion(grid.mask, iterations=width, border_value=0)
    return grid.mask & ~interior


def datum_assignment(grid: Grid, x, nu) -> np.ndarray:
    c = grid.cell_centers()
    s = (c[..., 0] - x[0]) * nu[0] + (c[..., 1] - x[1]) * nu[1]
    return np.where(grid.mask, (s >= 0).astype(np.int32), -1)


def boundary_field(p: CellProblem) -> LabelField:
    """The two-valued jump datum rasterized on the problem's cube."""
    grid = rasterize_cube(p.center, p.size, p.nu, p.h)
    return LabelField(grid, p.datum_labels(), datum_assignment(grid, p.x, p.nu))


# ---------------------------------------------------------------------------
# exact binary min cut


def _interior_faces(grid: Grid):
    """Index arrays of interior faces: (cellA, cellB, midpoint, normal)."""
    g = grid
    h = g.h
    flat = np.arange(g.nx * g.ny).reshape(g.nx, g.ny)
    parts = []
    both = g.mask[:-1, :] & g.mask[1:, :]
    ii, jj = np.nonzero(both)
    if len(ii):
        mids = np.column_stack([g.origin[0] + (ii + 1.0) * h, g.origin[1] + (jj + 0.5) * h])
        parts.append((flat[ii, jj], flat[ii + 1, jj], mids, np.tile([1.0, 0.0], (len(ii), 1))))
    both = g.mask[:, :-1] & g.mask[:, 1:]
    ii, jj = np.nonzero(both)
    if len(ii):
        mids = np.column_stack([g.origin[0] + (ii + 0.5) * h, g.origin[1] + (jj + 1.0) * h])
        parts.append((flat[ii, jj], flat[ii, jj + 1], mids, np.tile([0.0, 1.0], (len(ii), 1))))
    if not parts:
        z = np.zeros(0, dtype=int)
        return z, z, np.zeros((0, 2)), np.zeros((0, 2))
    a = np.concatenate([p[0] for p in parts])
    b = np.concatenate([p[1] for p in parts])
    mids = np.vstack([p[2] for p in parts])
    nus = np.vstack([p[3] for p in parts])
    return a, b, mids, nus


def _scale_to_int(weights: np.ndarray, mode: str = "nearest") -> tuple[np.ndarray, float, bool]:
    """Scale nonnegative float weights to integer capacities.

    The max-flow backend works in 32-bit arithmetic, so the scale keeps
    the capacity total below 2^30.  Within that budget the smallest
    power of two making every weight an exact integer is preferred
    (weights are dyadic for the constant / laminate / checkerboard
    instances); otherwise weights are rounded and the result flagged
    inexact.  mode="floor" rounds down, keeping cut values valid lower
    bounds.
    """
    total = float(weights.sum())
    budget = 30 - max(0, math.frexp(max(total, 1e-300))[1])
    budget = max(0, budget)
    need = 0
    exact = True
    for w in np.unique(weights):
        den = float(w).as_integer_ratio()[1]
        need = max(need, den.bit_length() - 1)
        if need > budget:
            exact = False
            break
    k = need if exact else budget
    scale = float(2 ** k)
    scaled = weights * scale
    caps = np.floor(scaled).astype(np.int64) if (mode == "floor" and not exact) \
        else np.rint(scaled).astype(np.int64)
    exact = exact and bool(np.all(scaled == caps))
    return caps, scale, exact


@dataclass
class BinaryCutResult:
    value: float          # cut weight over the included faces
    one_side: np.ndarray  # boolean (nx, ny): True where the solution carries label 1
    exact: bool


def solve_binary_cut(grid: Grid, weight_of_face, fixed_one: np.ndarray,
                     fixed_zero: np.ndarray, active: np.ndarray | None = None,
                     scale_mode: str = "nearest") -> BinaryCutResult:
    """Exact minimum of sum(weight) over faces separating labels 0 / 1.

    weight_of_face(mids, nus) returns the nonnegative cost of separating
    the two sides of each face.  fixed_one / fixed_zero freeze cells;
    `active` optionally restricts the free cells (cells outside it keep
    their frozen value and faces to them are charged as unary terms).
    Faces between two fixed cells are included in the reported value.
    """
    g = grid
    if active is None:
        active = g.mask & ~fixed_one & ~fixed_zero
    n = g.nx * g.ny
    a, b, mids, nus = _interior_faces(g)
    if len(a) == 0:
        return BinaryCutResult(0.0, fixed_one.copy(), True)
    w = np.asarray(weight_of_face(mids, nus), dtype=float)
    if (w < 0).any():
        raise InternalInvariantError("face weights must be nonnegative")

    one = fixed_one.ravel()
    zero = fixed_zero.ravel()
    act = active.ravel()

    cls_a = np.where(act[a], 0, np.where(one[a], 1, 2))   # 0 free, 1 one-side, 2 zero-side
    cls_b = np.where(act[b], 0, np.where(one[b], 1, 2))

    const = float(w[(cls_a + cls_b == 3)].sum())  # fixed one against fixed zero

    free_ids = np.nonzero(act)[0]
    if len(free_ids) == 0:
        return BinaryCutResult(const, fixed_one.copy(), True)
    remap = np.full(n, -1, dtype=np.int64)
    remap[free_ids] = np.arange(len(free_ids))
    S = len(free_ids)      # source node id
    T = S + 1

    rows, cols, caps = [], [], []

    ff = (cls_a == 0) & (cls_b == 0)
    if ff.any():
        u, v = remap[a[ff]], remap[b[ff]]
        rows += [u, v]
        cols += [v, u]
        caps += [w[ff], w[ff]]
    fa = (cls_a == 0) & (cls_b > 0)
    fb = (cls_b == 0) & (cls_a > 0)
    for sel, free_end, fixed_cls in ((fa, a, cls_b), (fb, b, cls_a)):
        if not sel.any():
            continue
        u = remap[free_end[sel]]
        to_one = fixed_cls[sel] == 1
        uu, ww = u[to_one], w[sel][to_one]
        if len(uu):
            rows.append(np.full(len(uu), S))
            cols.append(uu)
            caps.append(ww)
        uu, ww = u[~to_one], w[sel][~to_one]
        if len(uu):
            rows.append(uu)
            cols.append(np.full(len(uu), T))
            caps.append(ww)

    if not rows:
        return BinaryCutResult(const, fixed_one.copy(), True)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    caps = np.concatenate(caps)
    int_caps, scale, exact = _scale_to_int(caps, scale_mode)
    keep = int_caps > 0
    graph = csr_matrix((int_caps[keep], (rows[keep], cols[keep])), shape=(S + 2, S + 2))
    graph.sum_duplicates()
    res = maximum_flow(graph, S, T)

    # canonical minimum cut: source-reachable set of the residual graph
    residual = graph - res.flow
    residual.data = np.maximum(residual.data, 0)
    residual.eliminate_zeros()
    n_nodes = S + 2
    seen = np.zeros(n_nodes, dtype=bool)
    stack = [S]
    seen[S] = True
    indptr, indices, rdata = residual.indptr, residual.indices, residual.data
    while stack:
        u = stack.pop()
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if rdata[e] > 0 and not seen[v]:
                seen[v] = True
                stack.append(v)

    one_side = fixed_one.copy().ravel()
    one_side[free_ids[seen[:S]]] = True
    return BinaryCutResult(res.flow_value / scale + const,
                           one_side.reshape(g.nx, g.ny) & g.mask, exact)


def _require_connected(grid: Grid):
    _, num = ndimage.label(grid.mask)
    if num != 1:
        raise InvalidArgumentError("region mask must be connected")


def solve_two_label_frozen(grid: Grid, labels: list, frozen: np.ndarray,
                           frozen_val: np.ndarray, density: SurfaceDensity,
                           epsilon: float) -> tuple[LabelField, BinaryCutResult]:
    """Exact two-label solve on an arbitrary region with frozen cells."""
    _require_connected(grid)
    q0, q1 = labels[0], labels[1]

    def wf(mids, nus):
        jumps = q1.eval(mids) - q0.eval(mids)
        w = np.empty(len(mids))
        mag = np.linalg.norm(jumps, axis=1)
        ok = mag > 1e-12
        w[~ok] = 0.0
        if ok.any():
            w[ok] = density.eval_many(mids[ok] / epsilon, jumps[ok], nus[ok]) * grid.h
        return w

    fixed_one = frozen & (frozen_val == 1)
    fixed_zero = frozen & (frozen_val == 0)
    cut = solve_binary_cut(grid, wf, fixed_one, fixed_zero)
    a = np.where(grid.mask, cut.one_side.astype(np.int32), -1)
    return LabelField(grid, [q0, q1], a), cut


def solve_mincut(p: CellProblem) -> CellResult:
    """Exact solution of the two-label cell problem by s-t min cut."""
    if p.klass not in (KLASS_CONST, KLASS_SO2):
        raise InvalidArgumentError("min-cut solve requires the constant or so2 class")
    if p.truncation_k is not None and np.linalg.norm(p.zeta) > p.truncation_k:
        raise InvalidArgumentError("datum violates the truncation level")
    bf = boundary_field(p)
    frozen = frozen_band(bf.grid, p.band_width)
    u, cut = solve_two_label_frozen(bf.grid, bf.labels, frozen, bf.assignment,
                                    p.density, p.epsilon)
    energy = surface_energy(u, p.density, p.epsilon)
    return CellResult(energy=energy, field=u, solver="mincut",
                      certificate=cut.value, gap=energy - cut.value,
                      exact=cut.exact, oblique=p.is_oblique())


# ---------------------------------------------------------------------------
# heuristic multi-label solver


def _pair_weight(labels, i, j, mids, nus, density, epsilon, h):
    jumps = labels[i].eval(mids) - labels[j].eval(mids)
    mag = np.linalg.norm(jumps, axis=1)
    w = np.zeros(len(mids))
    ok = mag > 1e-12
    if ok.any():
        w[ok] = density.eval_many(mids[ok] / epsilon, jumps[ok], nus[ok]) * h
    return w


def solve_local(p: CellProblem, dictionary: list, schedule: LocalSchedule | None = None,
                seed: EnvSeed | None = None, init_fields: tuple = ()) -> CellResult:
    """Heuristic multi-label solve over a finite dictionary of motions.

    Exact pairwise swap moves (each a binary min cut) run to a fixpoint,
    an optional annealing phase explores single-cell moves, and a final
    single-cell descent certifies a local minimum.  The returned gap is
    measured against the min-cut relaxation that charges every face its
    cheapest separating pair.
    """
    schedule = schedule or LocalSchedule()
    seed = seed or EnvSeed(0)
    if not dictionary:
        raise InvalidArgumentError("label dictionary must be nonempty")
    bf = boundary_field(p)
    grid = bf.grid
    _require_connected(grid)

    labels = list(dictionary)
    b0, b1 = bf.labels
    i0 = _find_label(labels, b0, grid)
    i1 = _find_label(labels, b1, grid)
    if i0 is None or i1 is None:
        raise InvalidArgumentError("dictionary must contain both boundary labels")
    if p.truncation_k is not None:
        _check_truncation(labels, grid, p.truncation_k)

    frozen = frozen_band(grid, p.band_width)
    base = np.where(bf.assignment == 1, i1, i0).astype(np.int32)
    base = np.where(grid.mask, base, -1)
    free = grid.mask & ~frozen

    candidates = [base]
    for fld in init_fields:
        candidates.append(_project_to_dictionary(fld, labels, grid, base, frozen))

    best_assign = None
    best_energy = math.inf
    for cand in candidates:
        a, e = _descend(grid, labels, cand, free, p, schedule, seed)
        if e < best_energy - 1e-15:
            best_energy = e
            best_assign = a

    u = LabelField(grid, labels, best_assign)
    energy = surface_energy(u, p.density, p.epsilon)
    cert = None
    gap = None
    if len(labels) <= schedule.certificate_max_labels:
        cert = _relaxation_bound(grid, labels, frozen, bf.assignment, p)
        gap = energy - cert
    return CellResult(energy=energy, field=u, solver="local",
                      certificate=cert, gap=gap, exact=False,
                      oblique=p.is_oblique())


def _find_label(labels, target: RigidLabel, grid: Grid):
    reach = max(1.0, float(np.abs(grid.origin).max() + max(grid.nx, grid.ny) * grid.h))
    for k, lab in enumerate(labels):
        dev = np.abs(lab.b - target.b).max() + np.abs(lab.M - target.M).max() * reach
        if dev <= 1e-12:
            return k
    return None


def _check_truncation(labels, grid: Grid, k: float):
    centers = grid.cell_centers()[grid.mask]
    for lab in labels:
        if np.abs(lab.M).max() > k + 1e-12:
            raise InvalidArgumentError("dictionary label violates the gradient truncation")
        if np.linalg.norm(lab.eval(centers), axis=1).max() > k + 1e-12:
            raise InvalidArgumentError("dictionary label violates the value truncation")


def _project_to_dictionary(fld: LabelField, labels, grid: Grid, base, frozen):
    """Warm start: map a field's motions onto dictionary indices where they
    match exactly; unmatched cells and the frozen band keep the datum."""
    if not fld.grid.same_layout(grid):
        raise InvalidArgumentError("warm-start field must live on the problem grid")
    out = base.copy()
    for k, lab in enumerate(fld.labels):
        hit = _find_label(labels, lab, grid)
        if hit is None:
            continue
        sel = (fld.assignment == k) & grid.mask & ~frozen
        out[sel] = hit
    return out


def _face_tables(grid: Grid):
    a, b, mids, nus = _interior_faces(grid)
    order = np.argsort(np.concatenate([a, b]), kind="stable")
    face_ids = np.tile(np.arange(len(a)), 2)[order]
    cells = np.sort(np.concatenate([a, b]), kind="stable")
    starts = np.searchsorted(cells, np.arange(grid.nx * grid.ny + 1))
    return a, b, mids, nus, face_ids, starts


class _PairCache:
    def __init__(self, labels, mids, nus, density, epsilon, h):
        self.labels = labels
        self.mids = mids
        self.nus = nus
        self.density = density
        self.epsilon = epsilon
        self.h = h
        self.cache: dict[tuple[int, int], np.ndarray] = {}

    def w(self, i: int, j: int) -> np.ndarray:
        if i == j:
            key = (i, i)
            if key not in self.cache:
                self.cache[key] = np.zeros(len(self.mids))
            return self.cache[key]
        if i > j:
            i, j = j, i
        key = (i, j)
        if key not in self.cache:
            self.cache[key] = _pair_weight(self.labels, i, j, self.mids, self.nus,
                                           self.density, self.epsilon, self.h)
        return self.cache[key]

    def cost(self, fids: np.ndarray, la: np.ndarray, lb: np.ndarray) -> np.ndarray:
        out = np.zeros(len(fids))
        lo = np.minimum(la, lb)
        hi = np.maximum(la, lb)
        for i, j in {(int(x), int(y)) for x, y in zip(lo, hi)}:
            if i == j:
                continue
            sel = (lo == i) & (hi == j)
            out[sel] = self.w(i, j)[fids[sel]]
        return out


def _descend(grid: Grid, labels, assign, free, p: CellProblem,
             schedule: LocalSchedule, seed: EnvSeed):
    fa, fb, mids, nus, face_ids, starts = _face_tables(grid)
    pc = _PairCache(labels, mids, nus, p.density, p.epsilon, grid.h)
    assign = assign.copy()
    flat = assign.ravel()
    act_free = free.ravel()
    all_fids = np.arange(len(fa))

    def total():
        return float(pc.cost(all_fids, flat[fa], flat[fb]).sum())

    def swap(alpha, beta):
        active = act_free & ((flat == alpha) | (flat == beta))
        if not active.any():
            return False
        before_ids = np.nonzero(active[fa] | active[fb])[0]
        before = float(pc.cost(before_ids, flat[fa[before_ids]], flat[fb[before_ids]]).sum())

        # binary cut with one-side == alpha; faces to non-active neighbours
        # enter as source/sink capacities (unary terms)
        w_ab = pc.w(alpha, beta)
        rows, cols, caps = [], [], []
        remap = np.full(grid.nx * grid.ny, -1, dtype=np.int64)
        ids = np.nonzero(active)[0]
        remap[ids] = np.arange(len(ids))
        S, T = len(ids), len(ids) + 1
        act = active
        both = act[fa] & act[fb]
        if both.any():
            w = w_ab[both]
            u, v = remap[fa[both]], remap[fb[both]]
            rows += [u, v]
            cols += [v, u]
            caps += [w, w]
        for free_end, other_end in ((fa, fb), (fb, fa)):
            sel = act[free_end] & ~act[other_end] & (flat[other_end] >= 0)
            if not sel.any():
                continue
            fids = np.nonzero(sel)[0]
            u = remap[free_end[sel]]
            lab_other = flat[other_end[sel]]
            w_alpha = pc.cost(fids, np.full(len(fids), alpha), lab_other)
            w_beta = pc.cost(fids, np.full(len(fids), beta), lab_other)
            rows += [np.full(len(u), S), u]
            cols += [u, np.full(len(u), T)]
            caps += [w_beta, w_alpha]
        if not rows:
            return False
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        caps_f = np.concatenate(caps)
        int_caps, scale, _ = _scale_to_int(caps_f)
        keep = int_caps > 0
        graph = csr_matrix((int_caps[keep], (rows[keep], cols[keep])), shape=(T + 1, T + 1))
        graph.sum_duplicates()
        res = maximum_flow(graph, S, T)
        residual = graph - res.flow
        residual.data = np.maximum(residual.data, 0)
        residual.eliminate_zeros()
        seen = np.zeros(T + 1, dtype=bool)
        seen[S] = True
        stack = [S]
        indptr, indices, rdata = residual.indptr, residual.indices, residual.data
        while stack:
            node = stack.pop()
            for e in range(indptr[node], indptr[node + 1]):
                v = indices[e]
                if rdata[e] > 0 and not seen[v]:
                    seen[v] = True
                    stack.append(v)
        new_lab = np.where(seen[:S], alpha, beta)
        old = flat[ids].copy()
        flat[ids] = new_lab
        after = float(pc.cost(before_ids, flat[fa[before_ids]], flat[fb[before_ids]]).sum())
        if after < before - 1e-12:
            return True
        flat[ids] = old
        return False

    def cell_cost(cell, lab):
        fids = face_ids[starts[cell]:starts[cell + 1]]
        if len(fids) == 0:
            return 0.0
        other = np.where(fa[fids] == cell, fb[fids], fa[fids])
        ok = flat[other] >= 0
        if not ok.any():
            return 0.0
        return float(pc.cost(fids[ok], np.full(ok.sum(), lab), flat[other[ok]]).sum())

    k = len(labels)
    # phase 1: exact pairwise swaps to a fixpoint
    for _ in range(schedule.swap_rounds):
        changed = False
        for alpha in range(k):
            for beta in range(alpha + 1, k):
                changed |= swap(alpha, beta)
        if not changed:
            break

    free_cells = np.nonzero(act_free)[0]
    # phase 2: optional annealing over single-cell moves, keeping the best
    best_flat = flat.copy()
    best_e = total()
    if schedule.anneal_steps > 0 and len(free_cells):
        rng = np.random.default_rng((seed.seed * 1000003 + seed.stream) & (2 ** 63 - 1))
        temps = np.geomspace(schedule.t_start, schedule.t_end, schedule.anneal_steps)
        cur_e = best_e
        for step in range(schedule.anneal_steps):
            cell = int(free_cells[rng.integers(len(free_cells))])
            lab_new = int(rng.integers(k))
            lab_old = int(flat[cell])
            if lab_new == lab_old:
                continue
            de = -cell_cost(cell, lab_old)
            flat[cell] = lab_new
            de += cell_cost(cell, lab_new)
            if de < 0 or rng.random() < math.exp(-de / max(temps[step], 1e-12)):
                cur_e += de
                if cur_e < best_e - 1e-12:
                    best_e = cur_e
                    best_flat = flat.copy()
            else:
                flat[cell] = lab_old
        flat[:] = best_flat

    # phase 3: single-cell descent to a certified local minimum
    for _ in range(schedule.icm_rounds):
        changed = False
        for cell in free_cells:
            cur = int(flat[cell])
            costs = [cell_cost(cell, lab) for lab in range(k)]
            bestlab = int(np.argmin(costs))
            if costs[bestlab] < costs[cur] - 1e-12:
                flat[cell] = bestlab
                changed = True
        if not changed:
            break

    e = total()
    return flat.reshape(grid.nx, grid.ny), e


def _relaxation_bound(grid: Grid, labels, frozen, datum_assign, p: CellProblem) -> float:
    """Lower bound: min cut where each face costs its cheapest separating pair."""
    a, b, mids, nus = _interior_faces(grid)
    if len(a) == 0:
        return 0.0
    k = len(labels)
    wmin = np.full(len(a), math.inf)
    for i in range(k):
        for j in range(i + 1, k):
            wmin = np.minimum(wmin, _pair_weight(labels, i, j, mids, nus,
                                                 p.density, p.epsilon, grid.h))
    if k < 2:
        wmin[:] = 0.0

    def wf(_m, _n):
        return wmin

    fixed_one = frozen & (datum_assign == 1)
    fixed_zero = frozen & (datum_assign == 0)
    cut = solve_binary_cut(grid, wf, fixed_one, fixed_zero, scale_mode="floor")
    return cut.value


# ---------------------------------------------------------------------------
# gluing and truncation


def glue(inner: LabelField, outer: LabelField, subregion: np.ndarray,
         band_width: int = 1) -> LabelField:
    """Replace `outer` by `inner` on `subregion`.

    Requires the two fields to agree (as motions, at cell centers) on a
    band of the given width inside the subregion boundary, which makes
    the surgery energy-neutral across the seam.
    """
    if not inner.grid.same_layout(outer.grid):
        raise InvalidArgumentError("glue requires identical grids")
    subregion = np.asarray(subregion, dtype=bool) & inner.grid.mask
    if not subregion.any():
        raise InvalidArgumentError("empty subregion")
    interior = ndimage.binary_erosion(subregion, iterations=band_width, border_value=0)
    band = subregion & ~interior
    vi = inner.eval_at_centers()
    vo = outer.eval_at_centers()
    if band.any():
        dev = np.abs(vi[band] - vo[band]).max()
        if not np.isfinite(dev) or dev > 1e-12:
            raise InvalidArgumentError("fields disagree on the gluing band")
    labels = list(inner.labels) + list(outer.labels)
    off = len(inner.labels)
    a = np.where(subregion, inner.assignment, np.where(outer.grid.mask, outer.assignment + off, -1))
    return canonicalize(LabelField(inner.grid, labels, a))


@dataclass
class RestStats:
    rest_area: float
    rest_perimeter: float
    replaced_labels: int
    linf_out: float
    c_theta: float


def _label_region_stats(u: LabelField, sel_labels: set):
    g = u.grid
    member = np.isin(u.assignment, list(sel_labels)) & g.mask
    area = float(member.sum()) * g.h * g.h
    per = 0.0
    pad = np.zeros((g.nx + 2, g.ny + 2), dtype=bool)
    pad[1:-1, 1:-1] = member
    inner = pad[1:-1, 1:-1]
    for shift in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = np.roll(pad, shift, axis=(0, 1))[1:-1, 1:-1]
        per += float((inner & ~nb).sum()) * g.h
    return member, area, per


def truncate_field(u: LabelField, lam: float, theta: float, bdata: LabelField,
                   c_theta: float = 1.0) -> tuple[LabelField, RestStats]:
    """Bound the field by replacing oversized labels with the boundary datum.

    Labels whose values exceed `lam` anywhere on their cells are replaced
    by `bdata`, together with a rest set of small-area labels chosen
    greedily within the theta-budgets on area and perimeter.  The
    reported rest perimeter counts every face along which the surgery can
    create a new jump (the replaced region's boundary plus the datum's
    own jumps inside it), so
        energy(out) <= energy(in) + c2 * rest_perimeter
    holds by construction.
    """
    if lam < 1.0:
        raise InvalidArgumentError("truncation level lambda must be >= 1")
    if not u.grid.same_layout(bdata.grid):
        raise InvalidArgumentError("bdata must live on the field's grid")
    u = canonicalize(u)
    g = u.grid
    centers = g.cell_centers()

    sup = {}
    areas = {}
    for k in range(len(u.labels)):
        sel = (u.assignment == k) & g.mask
        if not sel.any():
            continue
        vals = u.labels[k].eval(centers[sel])
        sup[k] = float(np.linalg.norm(vals, axis=1).max())
        areas[k] = float(sel.sum()) * g.h * g.h

    big = {k for k, s in sup.items() if s > lam}

    total_jump = face_set(u).total_length()
    boundary_len = _region_boundary_length(g)
    budget_base = total_jump + boundary_len
    area_budget = theta * budget_base ** 2
    per_budget = theta * budget_base
    rest: set = set()
    acc_area = 0.0
    for k in sorted(set(sup) - big, key=lambda k: (areas[k], k)):
        if acc_area + areas[k] > area_budget:
            continue
        trial = rest | {k}
        _, tarea, tper = _label_region_stats(u, trial)
        if tarea <= area_budget and tper <= per_budget:
            rest = trial
            acc_area = tarea

    replaced = big | rest
    if not replaced:
        stats = RestStats(0.0, 0.0, 0, max(sup.values(), default=0.0), c_theta)
        return u, stats

    member, area, perim = _label_region_stats(u, replaced)
    # the datum's own jumps strictly inside the replaced region can appear
    # as new faces; charge them to the reported perimeter
    bfs = face_set(bdata)
    inside = np.zeros(0, dtype=bool)
    if len(bfs):
        mi = np.floor((bfs.midpoints - g.origin) / g.h - 1e-9).astype(int)
        mi2 = np.ceil((bfs.midpoints - g.origin) / g.h - 1e-9).astype(int) - 1
        ok = lambda idx: (idx[:, 0] >= 0) & (idx[:, 0] < g.nx) & (idx[:, 1] >= 0) & (idx[:, 1] < g.ny)
        both = ok(mi) & ok(mi2)
        inside = np.zeros(len(bfs), dtype=bool)
        inside[both] = member[mi[both, 0], mi[both, 1]] & member[mi2[both, 0], mi2[both, 1]]
    perim_total = perim + float(inside.sum()) * g.h

    out_labels = list(u.labels) + list(bdata.labels)
    off = len(u.labels)
    repl_mask = member
    a = np.where(repl_mask, bdata.assignment + off, u.assignment)
    a = np.where(g.mask, a, -1)
    out = canonicalize(LabelField(g, out_labels, a))

    out_sup = 0.0
    for k in range(len(out.labels)):
        sel = (out.assignment == k) & g.mask
        if sel.any():
            out_sup = max(out_sup, float(np.linalg.norm(out.labels[k].eval(centers[sel]), axis=1).max()))
    stats = RestStats(area, perim_total, len(replaced), out_sup, c_theta)
    return out, stats


def _region_boundary_length(g: Grid) -> float:
    pad = np.zeros((g.nx + 2, g.ny + 2), dtype=bool)
    pad[1:-1, 1:-1] = g.mask
    per = 0
    for shift in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = np.roll(pad, shift, axis=(0, 1))[1:-1, 1:-1]
        per += (g.mask & ~nb).sum()
    return float(per) * g.h
