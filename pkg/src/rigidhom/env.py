"""Surface-density environments on the plane.

A density assigns an energy-per-length f(x, zeta, nu) to an oriented
interface element at position x with jump height zeta and unit normal nu.
Four families are provided: constant, periodic unit-cell rasters, an
i.i.d. random checkerboard realized through a counter-based hash of
(seed, cell), and the anisotropic two-band density used by the interface
gap experiments.  All evaluations are pure; environments are safe to
share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

UNIT_NU_TOL = 1e-12
ZERO_JUMP_TOL = 1e-12


# ---------------------------------------------------------------------------
# seeds and the counter-based cell hash


@dataclass(frozen=True)
class EnvSeed:
    """Deterministic identity of one environment draw.

    Identical (seed, stream) always reproduce the same environment
    bit-exactly; distinct streams give independent draws for the same
    base seed.
    """

    seed: int
    stream: int = 0

    def child(self, k: int) -> "EnvSeed":
        return EnvSeed(self.seed, self.stream * 1000003 + k)


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def cell_hash(seed: EnvSeed, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    """Vectorized 64-bit hash of integer cell coordinates.

    This is the realization of the random environment: the value attached
    to cell (ix, iy) is a pure function of (seed, stream, ix, iy), so the
    infinite field never needs to be stored and integer shifts act by
    index translation.
    """
    ix = np.asarray(ix, dtype=np.int64)
    iy = np.asarray(iy, dtype=np.int64)
    h = np.uint64(_splitmix64(seed.seed & _MASK64) ^ _splitmix64((seed.stream + 0x51ED2701) & _MASK64))
    x = ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    y = iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
    with np.errstate(over="ignore"):
        z = (x ^ (y >> np.uint64(13)) ^ y ^ h) + np.uint64(0x165667B19E3779F9)
        z ^= z >> np.uint64(30)
        z *= np.uint64(0xBF58476D1CE4E5B9)
        z ^= z >> np.uint64(27)
        z *= np.uint64(0x94D049BB133111EB)
        z ^= z >> np.uint64(31)
    return z


# ---------------------------------------------------------------------------
# parameters


@dataclass
class DensityParams:
    """Structural constants of a density: bounds, comparison constant and
    the modulus-of-continuity table.

    sigma is stored as a piecewise-linear table of (r, sigma(r)) pairs
    with sigma(0) = 0, nondecreasing, capped at 1/2; beyond the last
    breakpoint it stays at the last value.
    """

    c0: float = 1.0
    c1: float = 0.5
    c2: float = 1.0
    sigma: list[tuple[float, float]] = field(default_factory=lambda: [(0.0, 0.0), (0.5, 0.5)])

    def __post_init__(self):
        if self.c0 < 1.0:
            raise InvalidArgumentError(f"c0 must be >= 1, got {self.c0}")
        if not 0.0 < self.c1 < 1.0:
            raise InvalidArgumentError(f"c1 must lie in (0,1), got {self.c1}")
        if self.c2 < 1.0:
            raise InvalidArgumentError(f"c2 must be >= 1, got {self.c2}")
        if self.c1 >= self.c2:
            raise InvalidArgumentError("c1 < c2 required")
        rs = [r for r, _ in self.sigma]
        ss = [s for _, s in self.sigma]
        if rs[0] != 0.0 or ss[0] != 0.0:
            raise InvalidArgumentError("sigma table must start at (0, 0)")
        if any(b < a for a, b in zip(rs, rs[1:])) or any(b < a for a, b in zip(ss, ss[1:])):
            raise InvalidArgumentError("sigma table must be nondecreasing")
        if max(ss) > 0.5:
            raise InvalidArgumentError("sigma must be bounded by 1/2")

    def sigma_of(self, r):
        rs = np.array([p[0] for p in self.sigma])
        ss = np.array([p[1] for p in self.sigma])
        return np.interp(r, rs, ss)

    def sigma_cap_radius(self) -> float:
        """Smallest tabulated r at which sigma saturates (inf if it never does)."""
        top = self.sigma[-1][1]
        for r, s in self.sigma:
            if s >= top - 1e-15:
                return r
        return float("inf")


# ---------------------------------------------------------------------------
# densities


class SurfaceDensity:
    """Base class: a density f(x, zeta, nu) with constants in `params`.

    Subclasses implement `_eval_many` on flat arrays; the public scalar
    entry point `eval_density` validates its arguments.  `kind` and
    `spec()` support JSON round-trips.
    """

    kind = "abstract"
    dimension = 2

    def __init__(self, params: DensityParams):
        self.params = params

    def _eval_many(self, x: np.ndarray, zeta: np.ndarray, nu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval_many(self, x: np.ndarray, zeta: np.ndarray, nu: np.ndarray) -> np.ndarray:
        """Evaluate on (n, 2) position/jump/normal arrays without per-point checks."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        zeta = np.broadcast_to(np.atleast_2d(np.asarray(zeta, dtype=float)), x.shape)
        nu = np.broadcast_to(np.atleast_2d(np.asarray(nu, dtype=float)), x.shape)
        return self._eval_many(x, zeta, nu)

    def spec(self) -> dict:
        raise NotImplementedError

    def shifted(self, z: tuple[int, int]) -> "SurfaceDensity":
        """Default shift for integer-periodic densities: identity."""
        return self


class ConstantDensity(SurfaceDensity):
    kind = "constant"

    def __init__(self, c: float = 1.0, params: DensityParams | None = None):
        if params is None:
            params = DensityParams(c0=1.0, c1=min(0.5, c / 2), c2=max(1.0, c))
        super().__init__(params)
        self.c = float(c)

    def _eval_many(self, x, zeta, nu):
        return np.full(x.shape[0], self.c)

    def spec(self):
        return {"kind": self.kind, "params": {"c": self.c}}


class PeriodicTableDensity(SurfaceDensity):
    """Density depending on position only, through a raster of the unit cell.

    values[ix, iy] is the density on the sub-cell
    [ix/nx, (ix+1)/nx) x [iy/ny, (iy+1)/ny) of [0,1)^2, extended
    periodically.  Jump- and normal-independent, hence trivially
    continuous in zeta.
    """

    kind = "periodic_table"

    def __init__(self, values: np.ndarray, params: DensityParams | None = None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.size == 0:
            raise InvalidArgumentError("unit-cell table must be a nonempty 2d raster")
        if params is None:
            lo, hi = float(values.min()), float(values.max())
            params = DensityParams(c0=1.0, c1=min(0.75, lo), c2=max(1.0, hi))
        super().__init__(params)
        self.values = values

    def _eval_many(self, x, zeta, nu):
        nx, ny = self.values.shape
        fx = x[:, 0] - np.floor(x[:, 0])
        fy = x[:, 1] - np.floor(x[:, 1])
        ix = np.minimum((fx * nx).astype(int), nx - 1)
        iy = np.minimum((fy * ny).astype(int), ny - 1)
        return self.values[ix, iy]

    def spec(self):
        return {"kind": self.kind, "params": {"values": self.values.tolist()}}


def layered_density(weak: float = 0.5, strong: float = 1.0) -> PeriodicTableDensity:
    """Horizontal laminate: `weak` on {frac(x2) in [0, 1/2)}, `strong` above."""
    return PeriodicTableDensity(np.array([[weak, strong]]))


class CheckerboardDensity(SurfaceDensity):
    """i.i.d. values on the unit cells of Z^2, drawn uniformly from a finite set.

    Stationary and ergodic by construction: the value of cell z is a
    function of (seed, z) only, and an integer shift of the environment is
    an index translation (realized through `offset`).
    """

    kind = "checkerboard"

    def __init__(self, seed: EnvSeed, values: tuple[float, ...] = (1.0, 2.0),
                 offset: tuple[int, int] = (0, 0), params: DensityParams | None = None):
        values = tuple(float(v) for v in values)
        if len(values) == 0:
            raise InvalidArgumentError("checkerboard needs a nonempty value set")
        if params is None:
            lo, hi = min(values), max(values)
            params = DensityParams(c0=1.0, c1=min(0.75, lo), c2=max(1.0, hi))
        super().__init__(params)
        self.seed = seed
        self.values = values
        self.offset = (int(offset[0]), int(offset[1]))

    def _eval_many(self, x, zeta, nu):
        ix = np.floor(x[:, 0]).astype(np.int64) + self.offset[0]
        iy = np.floor(x[:, 1]).astype(np.int64) + self.offset[1]
        h = cell_hash(self.seed, ix, iy)
        idx = (h % np.uint64(len(self.values))).astype(int)
        return np.array(self.values, dtype=float)[idx]

    def shifted(self, z):
        return CheckerboardDensity(self.seed, self.values,
                                   (self.offset[0] + int(z[0]), self.offset[1] + int(z[1])),
                                   self.params)

    def spec(self):
        return {"kind": self.kind,
                "params": {"values": list(self.values), "offset": list(self.offset)},
                "seed": [self.seed.seed, self.seed.stream]}


class CounterexampleDensity(SurfaceDensity):
    """Two-band anisotropic density on the periodic unit cell [-1/2, 1/2)^2.

    In the middle band |x2| <= 1/4 the value is
        min(5 + a*|zeta_1| + |zeta_2|, a^2) * (a*|nu_2| + |nu_1|),
    outside it the constant a^3.  Constants: c1 = 1, c2 = a^3,
    c0 = 1.5*a, and a modulus table of slope (a+1)/10, which dominate the
    exact Lipschitz and comparison constants of the min-expression.
    """

    kind = "counterexample"

    def __init__(self, a: float = 10.0):
        if a < 1.0:
            raise InvalidArgumentError(f"transport parameter a must be >= 1, got {a}")
        self.a = float(a)
        cap_r = 5.0 / (a + 1.0)
        # c1 must stay strictly below 1; the true pointwise minimum of f is 5.
        params = DensityParams(c0=1.5 * a, c1=0.999, c2=a ** 3,
                               sigma=[(0.0, 0.0), (cap_r, 0.5)])
        super().__init__(params)

    def band_value(self, zeta: np.ndarray, nu: np.ndarray) -> np.ndarray:
        a = self.a
        m = np.minimum(5.0 + a * np.abs(zeta[:, 0]) + np.abs(zeta[:, 1]), a * a)
        w = a * np.abs(nu[:, 1]) + np.abs(nu[:, 0])
        return m * w

    def _eval_many(self, x, zeta, nu):
        p2 = x[:, 1] - np.floor(x[:, 1] + 0.5)
        inside = np.abs(p2) <= 0.25
        out = np.full(x.shape[0], self.a ** 3)
        if inside.any():
            out[inside] = self.band_value(zeta[inside], nu[inside])
        return out

    def spec(self):
        return {"kind": self.kind, "params": {"a": self.a}}


# ---------------------------------------------------------------------------
# operations


def _check_jump_normal(zeta, nu) -> tuple[np.ndarray, np.ndarray]:
    zeta = np.asarray(zeta, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.linalg.norm(zeta) <= ZERO_JUMP_TOL:
        raise InvalidArgumentError("jump height zeta must be nonzero")
    if abs(np.linalg.norm(nu) - 1.0) > UNIT_NU_TOL:
        raise InvalidArgumentError(f"normal nu must be a unit vector, |nu| = {np.linalg.norm(nu)!r}")
    return zeta, nu


def eval_density(f: SurfaceDensity, x, zeta, nu) -> float:
    """Evaluate f at a single (position, jump, normal) triple, with checks."""
    zeta, nu = _check_jump_normal(zeta, nu)
    x = np.asarray(x, dtype=float)
    return float(f.eval_many(x[None, :], zeta[None, :], nu[None, :])[0])


def shift_environment(f: SurfaceDensity, z: tuple[int, int]) -> SurfaceDensity:
    """Environment shifted by an integer vector: eval(shifted, x) = eval(f, x+z)."""
    z = (int(z[0]), int(z[1]))
    return f.shifted(z)


@dataclass
class AxiomCheck:
    name: str
    passed: bool
    worst_violation: float
    note: str = ""


@dataclass
class AxiomReport:
    checks: list[AxiomCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def by_name(self, name: str) -> AxiomCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "worst_violation": c.worst_violation, "note": c.note}
                for c in self.checks}


@dataclass
class SamplePlan:
    """Sample counts for the axiom validator: positions, jumps, normals."""

    n_x: int = 16
    n_zeta: int = 8
    n_nu: int = 8
    x_extent: float = 2.0

    def __post_init__(self):
        if min(self.n_x, self.n_zeta, self.n_nu) < 1:
            raise InvalidArgumentError("sample counts must be >= 1")


def _sample_points(plan: SamplePlan):
    ts = (np.arange(plan.n_x) + 0.37) / plan.n_x * plan.x_extent
    xs = np.array([(a, b) for a in ts for b in ts])
    mags = np.geomspace(0.05, 50.0, plan.n_zeta)
    angles = np.linspace(0.0, 2 * np.pi, plan.n_zeta, endpoint=False) + 0.13
    zetas = np.array([(m * np.cos(t), m * np.sin(t)) for m, t in zip(mags, np.resize(angles, plan.n_zeta))])
    nu_angles = np.linspace(0.0, 2 * np.pi, plan.n_nu, endpoint=False)
    nus = np.column_stack([np.cos(nu_angles), np.sin(nu_angles)])
    # include the axis pairs explicitly: they anchor the symmetry check
    nus = np.vstack([nus, [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]])
    return xs, zetas, nus


def validate_axioms(f: SurfaceDensity, plan: SamplePlan | None = None) -> AxiomReport:
    """Sample-based check of the structural axioms of a surface density.

    Bounds and symmetry are checked exactly on the sample; the continuity
    estimate in zeta is checked for jump pairs whose distance lies below
    the saturation radius of the modulus table (beyond it the two-sided
    estimate carries no information).  Measurability is structural and
    reported as satisfied by construction.  Report-only, never raises.
    """
    plan = plan or SamplePlan()
    p = f.params
    xs, zetas, nus = _sample_points(plan)
    nX, nZ, nN = len(xs), len(zetas), len(nus)

    X = np.repeat(np.repeat(xs, nZ, axis=0), nN, axis=0)
    Z = np.tile(np.repeat(zetas, nN, axis=0), (nX, 1))
    NU = np.tile(nus, (nX * nZ, 1))
    F = f.eval_many(X, Z, NU).reshape(nX, nZ, nN)
    Fneg = f.eval_many(X, -Z, -NU).reshape(nX, nZ, nN)

    checks: list[AxiomCheck] = []
    tol = 1e-9 * max(1.0, p.c2)

    checks.append(AxiomCheck("f1_measurability", True, 0.0,
                             "structural: satisfied by construction"))

    # f2: two-sided continuity estimate in zeta, below the modulus cap
    cap_r = p.sigma_cap_radius()
    worst = 0.0
    for i in range(nZ):
        for j in range(i + 1, nZ):
            r = float(np.linalg.norm(zetas[i] - zetas[j]))
            if r >= cap_r:
                continue
            lhs = np.abs(F[:, i, :] - F[:, j, :])
            rhs = p.sigma_of(r) * (F[:, i, :] + F[:, j, :])
            worst = max(worst, float((lhs - rhs).max()))
    checks.append(AxiomCheck("f2_continuity", worst <= tol, max(worst, 0.0),
                             f"pairs with |dzeta| < {cap_r:g}"))

    # f3 / f4: comparison across jump magnitudes
    mags = np.linalg.norm(zetas, axis=1)
    worst3 = 0.0
    worst4 = 0.0
    for i in range(nZ):
        for j in range(nZ):
            if i == j:
                continue
            if mags[i] <= mags[j]:
                worst3 = max(worst3, float((F[:, i, :] - p.c0 * F[:, j, :]).max()))
            if p.c0 * mags[i] <= mags[j]:
                worst4 = max(worst4, float((F[:, i, :] - F[:, j, :]).max()))
    checks.append(AxiomCheck("f3_monotone_c0", worst3 <= tol, max(worst3, 0.0)))
    checks.append(AxiomCheck("f4_monotone", worst4 <= tol, max(worst4, 0.0)))

    worst5 = float((p.c1 - F).max())
    checks.append(AxiomCheck("f5_lower_bound", worst5 <= tol, max(worst5, 0.0)))
    worst6 = float((F - p.c2).max())
    checks.append(AxiomCheck("f6_upper_bound", worst6 <= tol, max(worst6, 0.0)))
    worst7 = float(np.abs(F - Fneg).max())
    checks.append(AxiomCheck("f7_symmetry", worst7 <= tol, worst7))

    return AxiomReport(checks)


# ---------------------------------------------------------------------------
# serialization


def density_to_json(f: SurfaceDensity) -> str:
    return json.dumps(f.spec(), sort_keys=True)


def density_from_spec(spec: dict) -> SurfaceDensity:
    kind = spec.get("kind")
    params = spec.get("params", {})
    if kind == "constant":
        return ConstantDensity(params.get("c", 1.0))
    if kind == "periodic_table":
        return PeriodicTableDensity(np.array(params["values"], dtype=float))
    if kind == "layered":
        return layered_density(params.get("weak", 0.5), params.get("strong", 1.0))
    if kind == "checkerboard":
        seed = spec.get("seed", [0, 0])
        return CheckerboardDensity(EnvSeed(int(seed[0]), int(seed[1])),
                                   tuple(params.get("values", (1.0, 2.0))),
                                   tuple(params.get("offset", (0, 0))))
    if kind == "counterexample":
        return CounterexampleDensity(params.get("a", 10.0))
    raise InvalidArgumentError(f"unknown density kind {kind!r}")


def density_from_json(text: str) -> SurfaceDensity:
    return density_from_spec(json.loads(text))


def table_to_csv(values: np.ndarray) -> str:
    """Row-major raster dump: one line per x2 row, entries increasing in x1."""
    values = np.asarray(values, dtype=float)
    lines = [",".join(repr(float(v)) for v in values[:, iy]) for iy in range(values.shape[1])]
    return "\n".join(lines) + "\n"


def table_from_csv(text: str) -> np.ndarray:
    rows = [[float(v) for v in line.split(",")] for line in text.strip().splitlines()]
    return np.array(rows, dtype=float).T
