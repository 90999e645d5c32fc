import itertools
import math

import numpy as np
import pytest

from rigidhom.cellsolve import (
    CellProblem,
    CellResult,
    LocalSchedule,
    boundary_field,
    frozen_band,
    glue,
    solve_local,
    solve_mincut,
    truncate_field,
)
from rigidhom.energy import surface_energy
from rigidhom.env import (
    ConstantDensity,
    CounterexampleDensity,
    EnvSeed,
    PeriodicTableDensity,
    layered_density,
)
from rigidhom.errors import InvalidArgumentError
from rigidhom.fields import (
    Grid,
    LabelField,
    constant_label,
    face_set,
    skew_label,
)

E1 = (1.0, 0.0)
E2 = (0.0, 1.0)


def brute_force_two_label(u0: LabelField, frozen: np.ndarray, density, epsilon: float):
    """Exhaustive minimum over all 0/1 assignments of the free cells."""
    g = u0.grid
    free = list(zip(*np.nonzero(g.mask & ~frozen)))
    best = math.inf
    base = u0.assignment.copy()
    for bits in itertools.product((0, 1), repeat=len(free)):
        a = base.copy()
        for (i, j), v in zip(free, bits):
            a[i, j] = v
        e = surface_energy(LabelField(g, u0.labels, a), density, epsilon)
        best = min(best, e)
    return best


def test_boundary_field_halfplane():
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1,
                    density=ConstantDensity(1.0), h=0.5)
    bf = boundary_field(p)
    c = bf.grid.cell_centers()
    vals = bf.eval_at_centers()
    assert np.allclose(vals[c[..., 1] >= 0], (1.0, 0.0))
    assert np.allclose(vals[c[..., 1] < 0], (0.0, 0.0))


def test_boundary_field_mirrored_normal():
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=(0.0, -1.0), zeta=E1,
                    density=ConstantDensity(1.0), h=0.5)
    bf = boundary_field(p)
    c = bf.grid.cell_centers()
    vals = bf.eval_at_centers()
    assert np.allclose(vals[c[..., 1] <= 0], (1.0, 0.0))
    assert np.allclose(vals[c[..., 1] > 0], (0.0, 0.0))


def test_boundary_field_energy_flat_competitor():
    t, c = 4.0, 2.0
    p = CellProblem(center=(0.0, 0.0), size=t, nu=E2, zeta=E1,
                    density=ConstantDensity(c), h=0.5)
    assert surface_energy(boundary_field(p), ConstantDensity(c), 1.0) == pytest.approx(c * t)


def test_mincut_flat_interface_exact():
    for t, h in ((4.0, 0.5), (2.0, 0.25)):
        p = CellProblem(center=(0.0, 0.0), size=t, nu=E2, zeta=E1,
                        density=ConstantDensity(1.0), h=h)
        r = solve_mincut(p)
        assert r.energy == t
        assert r.exact
        assert r.gap == 0.0


def test_mincut_layered_weak_layer():
    # weak layer 0.5 on frac(x2) in [0, 1/2): the optimal cut costs 0.5 per length
    f = layered_density()
    p = CellProblem(center=(0.0, 0.0), size=4.0, nu=E2, zeta=E1, density=f, h=0.125)
    r = solve_mincut(p)
    assert r.energy == pytest.approx(2.0)


def test_mincut_matches_brute_force_small_layered():
    f = layered_density()
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1, density=f, h=0.5)
    r = solve_mincut(p)
    bf = boundary_field(p)
    oracle = brute_force_two_label(bf, frozen_band(bf.grid, 1), f, p.epsilon)
    assert r.energy == pytest.approx(oracle, abs=1e-12)


def test_mincut_routes_through_weak_face():
    # one cheap face amid unit faces on a 3x3 grid; compare with brute force
    vals = np.ones((3, 3))
    vals[1, 1] = 0.1  # the unit cell sub-square containing the center
    f = PeriodicTableDensity(vals, params=None)
    p = CellProblem(center=(0.5, 0.5), size=1.0, nu=E2, zeta=E1, density=f, h=1.0 / 3.0)
    r = solve_mincut(p)
    bf = boundary_field(p)
    oracle = brute_force_two_label(bf, frozen_band(bf.grid, 1), f, p.epsilon)
    assert r.energy == pytest.approx(oracle, abs=1e-12)


def test_mincut_randomized_brute_force_oracle():
    rng = np.random.default_rng(123)
    for trial in range(20):
        n = int(rng.integers(3, 5))  # up to 4x4 = 16 cells
        vals = rng.choice([0.5, 0.75, 1.0, 1.5], size=(4, 4))
        f = PeriodicTableDensity(vals)
        p = CellProblem(center=(0.5, 0.5), size=1.0, nu=E2, zeta=E1,
                        density=f, h=1.0 / n, epsilon=float(rng.choice([0.5, 1.0])))
        r = solve_mincut(p)
        bf = boundary_field(p)
        oracle = brute_force_two_label(bf, frozen_band(bf.grid, 1), f, p.epsilon)
        assert r.energy == pytest.approx(oracle, abs=1e-12), f"trial {trial}"


def test_mincut_certificate_equals_energy():
    f = layered_density()
    p = CellProblem(center=(0.0, 0.0), size=4.0, nu=E2, zeta=E1, density=f, h=0.25)
    r = solve_mincut(p)
    assert r.certificate == pytest.approx(r.energy, abs=1e-12)
    assert surface_energy(r.field, f, p.epsilon) == pytest.approx(r.energy)


def test_mincut_disconnected_mask_rejected():
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1,
                    density=ConstantDensity(1.0), h=0.5)
    bf = boundary_field(p)
    mask = bf.grid.mask.copy()
    mask[1:3, :] = False  # split the square into two strips
    g = Grid(bf.grid.origin, bf.grid.h, bf.grid.nx, bf.grid.ny, mask)
    from rigidhom.cellsolve import solve_two_label_frozen
    with pytest.raises(InvalidArgumentError):
        solve_two_label_frozen(g, bf.labels, frozen_band(g, 1),
                               np.where(mask, bf.assignment, -1),
                               p.density, p.epsilon)


def test_mincut_upper_bound_c2_t():
    f = CounterexampleDensity(4)
    p = CellProblem(center=(0.0, 0.0), size=4.0, nu=E2, zeta=E1, density=f, h=0.25)
    r = solve_mincut(p)
    assert r.energy <= f.params.c2 * 4.0 + 1e-9


def test_mincut_lower_bound_column_crossing():
    # flat datum with nu = e2: every grid column crosses at least one face
    f = CounterexampleDensity(4)
    p = CellProblem(center=(0.0, 0.0), size=4.0, nu=E2, zeta=E1, density=f, h=0.25)
    r = solve_mincut(p)
    a = r.field.assignment
    ncols = a.shape[0]
    crossings = (a[:, :-1] != a[:, 1:]).sum(axis=1)
    assert (crossings >= 1).all()
    assert r.energy >= f.params.c1 * ncols * p.h - 1e-9


def test_solve_local_two_labels_reproduces_mincut():
    f = layered_density()
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1, density=f,
                    h=0.25, klass="skew")
    exact = solve_mincut(CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1,
                                     density=f, h=0.25))
    dic = [constant_label((0.0, 0.0)), constant_label(E1)]
    r = solve_local(p, dic, LocalSchedule(), EnvSeed(1))
    assert r.energy == pytest.approx(exact.energy, abs=1e-12)
    assert r.gap is not None and r.gap >= -1e-12


def test_solve_local_constant_density_extra_labels_do_not_help():
    f = ConstantDensity(1.0)
    t = 2.0
    p = CellProblem(center=(0.0, 0.0), size=t, nu=E2, zeta=E1, density=f,
                    h=0.25, klass="skew")
    rng = np.random.default_rng(5)
    dic = [constant_label((0.0, 0.0)), constant_label(E1)]
    dic += [skew_label(rng.normal(), rng.normal(size=2)) for _ in range(5)]
    r = solve_local(p, dic, LocalSchedule(anneal_steps=300), EnvSeed(3))
    assert r.energy == pytest.approx(t, abs=1e-12)


def test_solve_local_monotone_in_nested_dictionary():
    f = layered_density()
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1, density=f,
                    h=0.25, klass="skew")
    small = [constant_label((0.0, 0.0)), constant_label(E1)]
    big = small + [constant_label((0.5, 0.0)), skew_label(0.25, (0.0, 0.0))]
    r_small = solve_local(p, small, LocalSchedule(), EnvSeed(7))
    r_big = solve_local(p, big, LocalSchedule(), EnvSeed(7))
    assert r_big.energy <= r_small.energy + 1e-12


def test_solve_local_energy_never_exceeds_boundary_field():
    f = CounterexampleDensity(10)
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1, density=f,
                    h=0.25, klass="skew")
    bf_energy = surface_energy(boundary_field(p), f, p.epsilon)
    dic = [constant_label((0.0, 0.0)), constant_label(E1), skew_label(0.5, (0.0, 0.0))]
    r = solve_local(p, dic, LocalSchedule(), EnvSeed(2))
    assert r.energy <= bf_energy + 1e-12


def test_solve_local_requires_boundary_labels():
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1,
                    density=ConstantDensity(1.0), h=0.5, klass="skew")
    with pytest.raises(InvalidArgumentError):
        solve_local(p, [constant_label((0.0, 0.0))], LocalSchedule(), EnvSeed(0))
    with pytest.raises(InvalidArgumentError):
        solve_local(p, [], LocalSchedule(), EnvSeed(0))


def test_solve_local_result_is_single_cell_local_minimum():
    f = layered_density()
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1, density=f,
                    h=0.5, klass="skew")
    dic = [constant_label((0.0, 0.0)), constant_label(E1), constant_label((0.3, 0.1))]
    r = solve_local(p, dic, LocalSchedule(anneal_steps=100), EnvSeed(11))
    u = r.field
    g = u.grid
    base = surface_energy(u, f, p.epsilon)
    free = g.mask & ~frozen_band(g, p.band_width)
    for i, j in zip(*np.nonzero(free)):
        for lab in range(len(dic)):
            if lab == u.assignment[i, j]:
                continue
            a = u.assignment.copy()
            a[i, j] = lab
            perturbed = surface_energy(LabelField(g, u.labels, a), f, p.epsilon)
            assert perturbed >= base - 1e-9


def test_glue_identity_and_feasibility():
    f = ConstantDensity(1.0)
    p = CellProblem(center=(0.0, 0.0), size=4.0, nu=E2, zeta=E1, density=f, h=0.5)
    r = solve_mincut(p)
    sub = np.zeros_like(r.field.grid.mask)
    sub[:4, :] = True
    glued = glue(r.field, r.field, sub)
    assert surface_energy(glued, f, 1.0) == pytest.approx(r.energy)


def test_glue_adjacent_minimizers_subadditive():
    # two adjacent cubes sharing the flat datum: glued field is feasible for
    # the union problem and its energy adds up
    f = layered_density()
    pL = CellProblem(center=(-1.0, 0.0), size=2.0, nu=E2, zeta=E1, density=f, h=0.25)
    pR = CellProblem(center=(1.0, 0.0), size=2.0, nu=E2, zeta=E1, density=f, h=0.25)
    rL, rR = solve_mincut(pL), solve_mincut(pR)
    pU = CellProblem(center=(0.0, 0.0), size=4.0, nu=E2, zeta=E1, density=f, h=0.25)
    rU = solve_mincut(pU)
    # subadditivity of the union against the sum plus the datum seam
    assert rU.energy <= rL.energy + rR.energy + 2 * f.params.c2 + 1e-9


def test_glue_band_mismatch_rejected():
    f = ConstantDensity(1.0)
    p = CellProblem(center=(0.0, 0.0), size=4.0, nu=E2, zeta=E1, density=f, h=0.5)
    bf = boundary_field(p)
    other = LabelField(bf.grid, [constant_label((0.0, 0.0)), constant_label((2.0, 0.0))],
                       bf.assignment)
    sub = np.zeros_like(bf.grid.mask)
    sub[:4, :] = True
    with pytest.raises(InvalidArgumentError):
        glue(other, bf, sub)


def test_truncate_noop_when_bounded():
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1,
                    density=ConstantDensity(1.0), h=0.5)
    bf = boundary_field(p)
    out, stats = truncate_field(bf, lam=10.0, theta=0.01, bdata=bf)
    assert stats.rest_area == 0.0
    assert stats.rest_perimeter == 0.0
    assert np.array_equal(out.assignment, bf.assignment)


def test_truncate_replaces_far_translated_piece():
    f = ConstantDensity(1.0)
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1, density=f, h=0.5)
    bf = boundary_field(p)
    g = bf.grid
    labels = list(bf.labels) + [constant_label((1e6, 0.0))]
    a = bf.assignment.copy()
    a[1:3, 1:3] = 2
    u = LabelField(g, labels, a)
    e_in = surface_energy(u, f, 1.0)
    out, stats = truncate_field(u, lam=10.0, theta=0.0, bdata=bf)
    e_out = surface_energy(out, f, 1.0)
    assert out.eval_at_centers()[g.mask].max() <= 1.0 + 1e-12
    assert e_out <= e_in + f.params.c2 * stats.rest_perimeter + 1e-9
    assert stats.linf_out <= stats.c_theta * 10.0


def test_truncate_degenerate_lambda_replaces_interior():
    f = ConstantDensity(1.0)
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1, density=f, h=0.5)
    bf = boundary_field(p)
    g = bf.grid
    labels = [constant_label((5.0, 0.0)), constant_label((7.0, 0.0))]
    u = LabelField(g, labels, bf.assignment)
    out, stats = truncate_field(u, lam=1.0, theta=0.0, bdata=bf)
    vals = out.eval_at_centers()
    assert np.nanmax(np.abs(vals)) <= 1.0 + 1e-12
    assert stats.replaced_labels == 2


def test_truncate_random_fields_energy_contract():
    rng = np.random.default_rng(17)
    f = ConstantDensity(1.0)
    p = CellProblem(center=(0.0, 0.0), size=2.0, nu=E2, zeta=E1, density=f, h=0.25)
    bf = boundary_field(p)
    g = bf.grid
    for _ in range(20):
        extra = [constant_label(rng.normal(scale=20.0, size=2)) for _ in range(3)]
        labels = list(bf.labels) + extra
        a = bf.assignment.copy()
        n_blob = int(rng.integers(1, 4))
        for _ in range(n_blob):
            i, j = rng.integers(1, g.nx - 1), rng.integers(1, g.ny - 1)
            a[i:i + 2, j:j + 2] = int(rng.integers(2, 5))
        u = LabelField(g, labels, a)
        e_in = surface_energy(u, f, 1.0)
        lam = float(rng.choice([1.0, 5.0, 15.0]))
        out, stats = truncate_field(u, lam=lam, theta=float(rng.choice([0.0, 0.02])), bdata=bf)
        e_out = surface_energy(out, f, 1.0)
        assert e_out <= e_in + f.params.c2 * stats.rest_perimeter + 1e-9


def test_cell_problem_json_round_trip():
    p = CellProblem(center=(0.5, -0.5), size=3.0, nu=E2, zeta=(2.0, 1.0),
                    density=layered_density(), h=0.25, klass="so2",
                    truncation_k=4.0)
    q = CellProblem.from_spec(p.spec())
    assert q.spec() == p.spec()
    r = solve_mincut(q)
    s = CellResult.from_spec(r.spec())
    assert s.energy == r.energy
    assert np.array_equal(s.field.assignment, r.field.assignment)
