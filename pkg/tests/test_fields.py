import math

import numpy as np
import pytest

from rigidhom.errors import InvalidArgumentError
from rigidhom.fields import (
    Grid,
    LabelField,
    RigidLabel,
    canonicalize,
    constant_label,
    eval_rigid,
    face_set,
    jump_faces,
    rasterize_cube,
    refine,
    rotation_label,
    skew_label,
    total_jump_length,
)


def square_grid(n=4, h=1.0, origin=(-2.0, -2.0)):
    return Grid(np.array(origin), h, n, n)


def halfplane_field(grid, zeta=(1.0, 0.0), klass="const"):
    """Two-label field: zeta on {x2 >= 0}, zero below."""
    if klass == "const":
        labels = [constant_label((0.0, 0.0)), constant_label(zeta)]
    else:
        labels = [rotation_label(0.0, (0.0, 0.0)), rotation_label(0.0, zeta)]
    c = grid.cell_centers()
    a = (c[..., 1] >= 0).astype(np.int32)
    return LabelField(grid, labels, a)


def test_eval_rigid_constant():
    lab = constant_label((1.0, 0.0))
    assert np.allclose(eval_rigid(lab, (3.0, 4.0)), (1.0, 0.0))


def test_eval_rigid_quarter_turn():
    lab = rotation_label(math.pi / 2, (0.0, 0.0))
    assert np.allclose(eval_rigid(lab, (1.0, 0.0)), (0.0, 1.0), atol=1e-15)


def test_eval_rigid_skew_by_hand():
    # M = [[0, 2], [-2, 0]], b = (0, 1):  M (1,1) + b = (2, -2) + (0, 1)
    lab = skew_label(2.0, (0.0, 1.0))
    assert np.allclose(eval_rigid(lab, (1.0, 1.0)), (2.0, -1.0))


def test_rigid_label_class_invariants():
    with pytest.raises(InvalidArgumentError):
        RigidLabel(np.eye(2), np.zeros(2), "const")
    with pytest.raises(InvalidArgumentError):
        RigidLabel(2 * np.eye(2), np.zeros(2), "so2")
    with pytest.raises(InvalidArgumentError):
        RigidLabel(np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros(2), "skew")
    with pytest.raises(InvalidArgumentError):
        RigidLabel(np.zeros((2, 2)), np.zeros(2), "nope")


def test_jump_faces_constant_field_empty():
    g = square_grid()
    u = LabelField(g, [constant_label((1.0, 2.0))], np.zeros((4, 4), dtype=np.int32))
    assert jump_faces(u) == []


def test_jump_faces_halfplane_split():
    # 4x4 unit cells over (-2, 2)^2, split at x2 = 0: 4 faces, jump e1, normal e2
    u = halfplane_field(square_grid())
    faces = jump_faces(u)
    assert len(faces) == 4
    for f in faces:
        assert np.allclose(f.jump, (1.0, 0.0))
        assert np.allclose(f.normal, (0.0, 1.0))
        assert f.midpoint[1] == 0.0
    assert total_jump_length(u) == pytest.approx(4.0)


def test_jump_faces_merges_duplicate_motions():
    g = square_grid()
    labels = [constant_label((1.0, 1.0)), constant_label((1.0, 1.0))]
    a = np.zeros((4, 4), dtype=np.int32)
    a[:, 2:] = 1
    u = LabelField(g, labels, a)
    assert jump_faces(u) == []
    assert len(canonicalize(u).labels) == 1


def test_face_orientation_sign():
    u = halfplane_field(square_grid())
    fs = face_set(u)
    # normal e2 points into the zeta-side, so jump = u+ - u- = zeta
    assert np.allclose(fs.jumps, [[1.0, 0.0]] * 4)
    assert (fs.plus != fs.minus).all()


def test_refine_identity():
    u = halfplane_field(square_grid())
    r1, r2 = refine(u, u)
    v0 = u.eval_at_centers()
    assert np.allclose(r1.eval_at_centers()[u.grid.mask], v0[u.grid.mask])
    assert np.allclose(r2.eval_at_centers()[u.grid.mask], v0[u.grid.mask])


def test_refine_quadrants():
    g = square_grid()
    u1 = halfplane_field(g)            # split at x2 = 0
    c = g.cell_centers()
    labels = [constant_label((0.0, 0.0)), constant_label((0.0, 1.0))]
    a = (c[..., 0] >= 0).astype(np.int32)
    u2 = LabelField(g, labels, a)      # split at x1 = 0
    r1, r2 = refine(u1, u2)
    assert len(r1.labels) == 4
    assert np.array_equal(r1.assignment, r2.assignment)
    assert np.allclose(r1.eval_at_centers()[g.mask], u1.eval_at_centers()[g.mask])
    assert np.allclose(r2.eval_at_centers()[g.mask], u2.eval_at_centers()[g.mask])


def test_refine_random_fields_pointwise_oracle():
    rng = np.random.default_rng(7)
    g = Grid(np.array([0.0, 0.0]), 0.25, 8, 8)
    for _ in range(5):
        labs1 = [constant_label(rng.normal(size=2)), skew_label(rng.normal(), rng.normal(size=2))]
        labs2 = [constant_label(rng.normal(size=2)), constant_label(rng.normal(size=2))]
        u1 = LabelField(g, labs1, rng.integers(0, 2, size=(8, 8)).astype(np.int32))
        u2 = LabelField(g, labs2, rng.integers(0, 2, size=(8, 8)).astype(np.int32))
        r1, r2 = refine(u1, u2)
        assert len(r1.labels) <= len(labs1) * len(labs2)
        assert np.allclose(r1.eval_at_centers()[g.mask], u1.eval_at_centers()[g.mask])
        assert np.allclose(r2.eval_at_centers()[g.mask], u2.eval_at_centers()[g.mask])


def test_refine_grid_mismatch_rejected():
    u1 = halfplane_field(square_grid(4))
    u2 = halfplane_field(square_grid(5))
    with pytest.raises(InvalidArgumentError):
        refine(u1, u2)


def test_refine_preserves_jump_set():
    g = square_grid()
    u1 = halfplane_field(g)
    c = g.cell_centers()
    u2 = LabelField(g, [constant_label((0, 0)), constant_label((2.0, 0))],
                    (c[..., 0] >= 0).astype(np.int32))
    r1, _ = refine(u1, u2)
    f_direct = face_set(u1)
    f_refined = face_set(r1)
    key = lambda fs: sorted(map(tuple, np.column_stack([fs.midpoints, fs.jumps]).round(12)))
    assert key(f_direct) == key(f_refined)


def test_rasterize_cube_axis_full_mask():
    g = rasterize_cube((0.0, 0.0), 1.0, (0.0, 1.0), 0.25)
    assert (g.nx, g.ny) == (4, 4)
    assert g.mask.all()
    g1 = rasterize_cube((0.0, 0.0), 1.0, (1.0, 0.0), 0.25)
    assert (g1.nx, g1.ny) == (4, 4)
    assert g1.mask.all()


def test_rasterize_cube_oblique_area():
    nu = np.array([1.0, 1.0]) / math.sqrt(2.0)
    g = rasterize_cube((0.0, 0.0), 1.0, nu, 0.125)
    assert abs(g.masked_area() - 1.0) < 0.1


def test_rasterize_cube_lattice_alignment():
    # two cubes rasterized independently share the global h-lattice
    a = rasterize_cube((0.0, 0.0), 2.0, (0.0, 1.0), 0.5)
    b = rasterize_cube((2.0, 0.0), 2.0, (0.0, 1.0), 0.5)
    assert np.allclose((b.origin - a.origin) / 0.5, np.round((b.origin - a.origin) / 0.5))


def test_total_jump_length_invariant_under_relabeling():
    g = square_grid()
    u = halfplane_field(g)
    # permute the label order
    perm = LabelField(g, [u.labels[1], u.labels[0]], 1 - u.assignment)
    assert total_jump_length(perm) == total_jump_length(u)


def test_constant_labels_make_x_independent_jumps():
    g = square_grid()
    u = halfplane_field(g)
    fs = face_set(u)
    lab_p, lab_m = u.labels[1], u.labels[0]
    for i in range(len(fs)):
        m = fs.midpoints[i]
        for probe in (m + (0.3, 0.0), m - (0.4, 0.0)):
            assert np.allclose(lab_p.eval(probe) - lab_m.eval(probe), fs.jumps[i])


def test_label_field_json_round_trip():
    g = rasterize_cube((0.5, 0.5), 1.0, (0.0, 1.0), 0.25)
    c = g.cell_centers()
    labels = [constant_label((0.0, 0.0)), skew_label(0.5, (1.0 / 3.0, -2.0))]
    a = np.where(g.mask, (c[..., 1] >= 0.5).astype(np.int32), -1)
    u = LabelField(g, labels, a)
    v = LabelField.from_json(u.to_json())
    assert v.grid.same_layout(u.grid)
    assert np.array_equal(v.assignment, u.assignment)
    for la, lb in zip(u.labels, v.labels):
        assert np.array_equal(la.M, lb.M) and np.array_equal(la.b, lb.b)
        assert la.klass == lb.klass
