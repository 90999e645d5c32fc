"""Cell-formula estimation of the homogenised interface density.

The normalized minimal interface energy over growing oriented cubes
converges (almost surely, for stationary environments) to a direction-
and jump-dependent effective density.  This module realizes the
rectangle-indexed subadditive process behind that limit, Monte-Carlo
estimates of the limit with confidence intervals over environment
draws, structural checks on the estimated table, and the Dirichlet
variant with a frozen boundary region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cellsolve import (
    CellProblem,
    LocalSchedule,
    boundary_field,
    datum_assignment,
    frozen_band,
    solve_local,
    solve_mincut,
    solve_two_label_frozen,
)
from .energy import surface_energy
from .env import EnvSeed, SurfaceDensity, density_from_spec
from .errors import InvalidArgumentError, UnsupportedDirectionError
from .fields import Grid, LabelField, rotation_for_normal

RATIONAL_DENOM_CAP = 20


# ---------------------------------------------------------------------------
# rational directions


def rationalize_direction(nu, cap: int = RATIONAL_DENOM_CAP) -> tuple[int, int, int]:
    """(p, q, M) with nu = (p, q)/M, p^2 + q^2 = M^2 and M <= cap.

    Scans denominators up to the cap (axis directions give M = 1);
    directions without an exact rational representation are rejected
    rather than silently approximated.
    """
    nu = np.asarray(nu, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-9:
        raise InvalidArgumentError("nu must be a unit vector")
    for m in range(1, cap + 1):
        p = round(nu[0] * m)
        q = round(nu[1] * m)
        if p * p + q * q != m * m:
            continue
        if abs(p / m - nu[0]) <= 1e-9 and abs(q / m - nu[1]) <= 1e-9:
            return int(p), int(q), int(m)
    raise UnsupportedDirectionError(
        f"direction {nu.tolist()} has no exact rational form with denominator <= {cap}")


# ---------------------------------------------------------------------------
# the subadditive process


@dataclass
class SolverConfig:
    """Which solver evaluates the cell problems."""

    method: str = "mincut"            # "mincut" or "local"
    h: float = 0.25
    band_width: int = 1
    klass: str = "const"
    dictionary: list = None
    schedule: LocalSchedule = None

    def solve(self, p: CellProblem):
        p.h = self.h
        p.band_width = self.band_width
        if self.method == "mincut":
            return solve_mincut(p)
        if self.method == "local":
            dic = self.dictionary or p.datum_labels()
            return solve_local(p, dic, self.schedule or LocalSchedule(),
                               EnvSeed(0))
        raise InvalidArgumentError(f"unknown solver method {self.method!r}")


@dataclass
class SubadditiveSample:
    omega: EnvSeed
    zeta: tuple
    nu: tuple
    rect: tuple                # (a1, b1): the base interval of the cuboid
    m_nu: int
    value: float               # m / M_nu^(d-1)
    solver: str
    exact: bool


def _rotated_cuboid_grid(p: int, q: int, m: int, rect: tuple, h: float) -> Grid:
    """Rasterize T(rect) = m * R * (rect x [-c, c)) on the global lattice."""
    a1, b1 = rect
    if not b1 > a1:
        raise InvalidArgumentError("rectangle must have positive length")
    c = 0.5 * (b1 - a1)
    R = np.array([[q / m, p / m], [-p / m, q / m]])
    corners_local = np.array([[a1, -c], [a1, c], [b1, -c], [b1, c]]) * m
    corners = corners_local @ R.T
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    i0, j0 = math.floor(lo[0] / h), math.floor(lo[1] / h)
    i1, j1 = math.ceil(hi[0] / h), math.ceil(hi[1] / h)
    g = Grid(np.array([i0 * h, j0 * h]), h, i1 - i0, j1 - j0)
    centers = g.cell_centers()
    local = np.einsum("ab,ijb->ija", R.T, centers) / m
    mask = ((local[..., 0] >= a1) & (local[..., 0] < b1)
            & (local[..., 1] >= -c) & (local[..., 1] < c))
    if not mask.any():
        raise InvalidArgumentError("cuboid rasterization is empty")
    ii = np.where(mask.any(axis=1))[0]
    jj = np.where(mask.any(axis=0))[0]
    mask = mask[ii[0]:ii[-1] + 1, jj[0]:jj[-1] + 1]
    origin = g.origin + np.array([ii[0] * h, jj[0] * h])
    return Grid(origin, h, mask.shape[0], mask.shape[1], mask)


def _density_for(omega: EnvSeed, density_spec) -> SurfaceDensity:
    """Instantiate the environment for one draw.

    density_spec is either a SurfaceDensity (used as is: deterministic
    environments) or a factory called with the seed.
    """
    if isinstance(density_spec, SurfaceDensity):
        return density_spec
    return density_spec(omega)


def mu_sample(omega: EnvSeed, zeta, nu, rect: tuple, density_spec,
              solver: SolverConfig | None = None) -> SubadditiveSample:
    """One draw of the rectangle process: normalized minimal energy of the
    jump datum on the rotated cuboid over the rectangle."""
    solver = solver or SolverConfig()
    p_, q_, m_ = rationalize_direction(nu)
    grid = _rotated_cuboid_grid(p_, q_, m_, rect, solver.h)
    density = _density_for(omega, density_spec)
    prob = CellProblem(center=(0.0, 0.0), size=1.0, nu=tuple(nu), zeta=tuple(zeta),
                       density=density, x=(0.0, 0.0), klass=solver.klass,
                       epsilon=1.0, h=solver.h, band_width=solver.band_width)
    labels = prob.datum_labels()
    frozen = frozen_band(grid, solver.band_width)
    datum = datum_assignment(grid, (0.0, 0.0), nu)
    prob.region = grid
    if solver.method == "mincut":
        u, cut = solve_two_label_frozen(grid, labels, frozen, datum, density, 1.0)
        energy = surface_energy(u, density, 1.0)
        exact = cut.exact
        tag = "mincut"
    else:
        dic = solver.dictionary or labels
        res = solve_local(prob, dic, solver.schedule or LocalSchedule(), omega)
        energy = res.energy
        exact = False
        tag = "local"
    value = energy / m_
    axis = m_ == 1 and (p_ == 0 or q_ == 0)
    if axis and value > density.params.c2 * (rect[1] - rect[0]) + 1e-9:
        raise InvalidArgumentError("process value exceeded the uniform bound")
    return SubadditiveSample(omega=omega, zeta=tuple(zeta), nu=tuple(nu),
                             rect=tuple(rect), m_nu=m_, value=value,
                             solver=tag, exact=exact)


# ---------------------------------------------------------------------------
# f_hom estimation


@dataclass
class FHomEstimate:
    zeta: tuple
    nu: tuple
    t_schedule: tuple
    values: dict               # t -> list of per-omega normalized values
    point: float               # mean at the largest t
    ci_halfwidth: float        # 1.96 * standard error at the largest t
    converged: bool            # last two t-levels agree within the CI
    ergodic_mean: bool         # point is an omega-ensemble mean
    solver: str

    def variance_by_t(self) -> dict:
        return {t: float(np.var(v, ddof=1)) if len(v) > 1 else 0.0
                for t, v in self.values.items()}


def estimate_fhom(zeta, nu, t_schedule, omega_count: int, density_spec,
                  solver: SolverConfig | None = None, r_map=None,
                  base_x=(0.0, 0.0), base_seed: EnvSeed = EnvSeed(0)) -> FHomEstimate:
    """Monte-Carlo estimate of the homogenised density at one (zeta, nu).

    For every cube size t and environment draw, solves the cell problem
    with datum at t * base_x on the cube of side r(t) and normalizes by
    r(t)^(d-1); the point estimate is the ensemble mean at the largest t.
    """
    solver = solver or SolverConfig()
    t_schedule = tuple(t_schedule)
    if len(t_schedule) < 2 or any(b <= a for a, b in zip(t_schedule, t_schedule[1:])):
        raise InvalidArgumentError("t schedule must be increasing with >= 2 entries")
    if omega_count < 2:
        raise InvalidArgumentError("need at least two environment draws")
    r_map = r_map or (lambda t: t)

    values: dict = {}
    tag = solver.method
    for t in t_schedule:
        r = float(r_map(t))
        if r < t:
            raise InvalidArgumentError("r(t) >= t is required")
        per_omega = []
        for w in range(omega_count):
            omega = base_seed.child(w)
            density = _density_for(omega, density_spec)
            center = (t * base_x[0], t * base_x[1])
            prob = CellProblem(center=center, size=r, nu=tuple(nu),
                               zeta=tuple(zeta), density=density,
                               x=center, klass=solver.klass,
                               epsilon=1.0, h=solver.h,
                               band_width=solver.band_width)
            res = solver.solve(prob)
            per_omega.append(res.energy / r)
        values[t] = per_omega

    last = np.array(values[t_schedule[-1]])
    prev = np.array(values[t_schedule[-2]])
    point = float(last.mean())
    se = float(last.std(ddof=1) / math.sqrt(len(last))) if len(last) > 1 else 0.0
    ci = 1.96 * se
    converged = abs(point - float(prev.mean())) <= max(ci, 1e-12)
    return FHomEstimate(zeta=tuple(zeta), nu=tuple(nu), t_schedule=t_schedule,
                        values=values, point=point, ci_halfwidth=ci,
                        converged=converged, ergodic_mean=omega_count > 1,
                        solver=tag)


# ---------------------------------------------------------------------------
# structural checks on an estimated table


@dataclass
class FHomCheck:
    name: str
    passed: bool
    worst: float
    note: str = ""


@dataclass
class FHomReport:
    checks: list

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def by_name(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def check_fhom_axioms(estimates: list, params, x_pairs: list | None = None) -> FHomReport:
    """Verify the estimated table against the structure the limit density
    must have: bounds, jump-magnitude comparisons within confidence
    intervals, symmetry under (zeta, nu) -> (-zeta, -nu), and base-point
    independence for the supplied estimate pairs."""
    if len({e.zeta for e in estimates}) < 2:
        raise InvalidArgumentError("table must cover several jump heights")
    checks = []

    worst = max(max(params.c1 - e.point, e.point - params.c2) for e in estimates)
    checks.append(FHomCheck("bounds", worst <= 1e-9, max(worst, 0.0)))

    worst3 = 0.0
    worst4 = 0.0
    for e1 in estimates:
        for e2 in estimates:
            if e1 is e2 or e1.nu != e2.nu:
                continue
            m1 = np.linalg.norm(e1.zeta)
            m2 = np.linalg.norm(e2.zeta)
            slack = e1.ci_halfwidth + e2.ci_halfwidth
            if m1 <= m2:
                worst3 = max(worst3, e1.point - params.c0 * e2.point - params.c0 * slack)
            if params.c0 * m1 <= m2:
                worst4 = max(worst4, e1.point - e2.point - slack)
    checks.append(FHomCheck("monotone_c0", worst3 <= 1e-9, max(worst3, 0.0)))
    checks.append(FHomCheck("monotone", worst4 <= 1e-9, max(worst4, 0.0)))

    worst7 = 0.0
    pairs = 0
    for e1 in estimates:
        for e2 in estimates:
            if (np.allclose(np.asarray(e1.zeta), -np.asarray(e2.zeta))
                    and np.allclose(np.asarray(e1.nu), -np.asarray(e2.nu))):
                pairs += 1
                slack = e1.ci_halfwidth + e2.ci_halfwidth
                worst7 = max(worst7, abs(e1.point - e2.point) - slack)
    checks.append(FHomCheck("symmetry", worst7 <= 1e-9, max(worst7, 0.0),
                            note=f"{pairs} mirrored pairs" if pairs else "no mirrored pairs sampled"))

    if x_pairs:
        worstx = 0.0
        for ea, eb in x_pairs:
            slack = ea.ci_halfwidth + eb.ci_halfwidth
            worstx = max(worstx, abs(ea.point - eb.point) - slack)
        checks.append(FHomCheck("x_independence", worstx <= 1e-9, max(worstx, 0.0)))

    return FHomReport(checks)


# ---------------------------------------------------------------------------
# Dirichlet infima


def dirichlet_infimum(u0: LabelField, frozen_region: np.ndarray, epsilon: float,
                      density: SurfaceDensity, solver: SolverConfig | None = None) -> float:
    """Infimum of the interface energy among fields frozen to u0 on the
    given region (which must contain a band along the domain boundary)."""
    solver = solver or SolverConfig()
    frozen_region = np.asarray(frozen_region, dtype=bool) & u0.grid.mask
    if not frozen_region.any():
        raise InvalidArgumentError("frozen region must be nonempty")
    rim = frozen_band(u0.grid, 1)
    if not (rim & ~frozen_region).sum() == 0:
        raise InvalidArgumentError("frozen region must contain the boundary band")
    if len(u0.labels) != 2:
        raise InvalidArgumentError("two-label datum required")
    u, _ = solve_two_label_frozen(u0.grid, u0.labels, frozen_region,
                                  u0.assignment, density, epsilon)
    return surface_energy(u, density, epsilon)
