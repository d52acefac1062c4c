import math

import numpy as np
import pytest

from fvhom import coefficients as co
from fvhom import linalg as la
from fvhom import mesh as me
from fvhom.errors import AssemblyError, ConfigError, MeshMismatchError, UnsupportedDiscretizationError

IDENTITY = co.DiagonalField(co.ScalarFieldSpec(1.0), co.ScalarFieldSpec(1.0))


def solve(system, tol=1e-12):
    x, report = la.bicgstab(system.matrix, system.rhs, precond=la.ilu0(system.matrix), tol=tol)
    assert report.converged
    return x


def test_build_mesh_centers():
    m = me.build_uniform_mesh((-1.0, -1.0), (2.0, 2.0), (2, 2))
    assert m.n_cells == 4
    centers = m.cell_centers()
    expected = {(-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)}
    assert {tuple(c) for c in centers} == expected


def test_fine_mesh_spacing():
    m = me.build_uniform_mesh((-1.0, -1.0), (2.0, 2.0), (1000, 1000))
    assert m.hx == pytest.approx(2e-3, rel=1e-15)
    assert m.hy == pytest.approx(2e-3, rel=1e-15)


def test_mesh_validation_errors():
    with pytest.raises(ConfigError):
        me.build_uniform_mesh((0, 0), (0.0, 1.0), (2, 2))
    with pytest.raises(ConfigError):
        me.build_uniform_mesh((0, 0), (1.0, 1.0), (0, 2))


def brute_force_interior_edges(m):
    """Adjacency by center distance: the enumeration oracle for small meshes."""
    centers = m.cell_centers()
    pairs = set()
    for i in range(m.n_cells):
        for j in range(i + 1, m.n_cells):
            d = centers[j] - centers[i]
            if (abs(abs(d[0]) - m.hx) < 1e-12 and abs(d[1]) < 1e-12) or (
                abs(abs(d[1]) - m.hy) < 1e-12 and abs(d[0]) < 1e-12
            ):
                pairs.add((i, j))
    return pairs


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_interior_edge_count_matches_enumeration(n):
    m = me.build_uniform_mesh((0, 0), (1, 1), (n, n))
    oracle = brute_force_interior_edges(m)
    assert m.interior_edge_count() == len(oracle) == 2 * n * (n - 1)
    i, j, _ = me.interior_edge_pairs(m)
    assert {(int(a), int(b)) for a, b in zip(i, j)} == oracle


def test_cell_volumes_sum_to_box_volume():
    m = me.build_uniform_mesh((-1.5, 2.0), (3.0, 0.5), (7, 3))
    assert m.cell_volume * m.n_cells == pytest.approx(1.5, rel=1e-14)


def test_transmissibility_constant_field_is_coefficient():
    # square cells: tau = h * a^2 / (a*h/2 + a*h/2) = a
    m = me.build_uniform_mesh((0, 0), (1, 1), (4, 4))
    fld = co.DiagonalField(co.ScalarFieldSpec(2.5), co.ScalarFieldSpec(2.5))
    assert me.transmissibility(m, fld, 0, 1) == pytest.approx(2.5, rel=1e-14)
    assert me.transmissibility(m, fld, 0, 4) == pytest.approx(2.5, rel=1e-14)


def test_transmissibility_harmonic_mean_of_one_and_three():
    # a(y1) = 2 + sin(pi*y1 - pi) hits exactly 1 and 3 at the two cell centers
    m = me.build_uniform_mesh((0.0, 0.0), (2.0, 2.0), (2, 2))
    spec = co.ScalarFieldSpec(2.0, (co.TrigTerm(1.0, "sin", (math.pi, 0.0), -math.pi),))
    fld = co.DiagonalField(spec, spec)
    a11, _ = me.cell_coefficient_samples(m, fld)
    assert a11[0] == pytest.approx(1.0, abs=1e-12)
    assert a11[1] == pytest.approx(3.0, abs=1e-12)
    assert me.transmissibility(m, fld, 0, 1) == pytest.approx(1.5, abs=1e-12)


def test_boundary_transmissibility():
    # tau_b = meas * C / (h/2); unit square cells with a = 1 give 2
    m = me.build_uniform_mesh((0.0, 0.0), (2.0, 2.0), (2, 2))
    assert me.boundary_transmissibility(m, IDENTITY, 0, "left") == pytest.approx(2.0)
    assert me.boundary_transmissibility(m, IDENTITY, 0, "bottom") == pytest.approx(2.0)


def test_transmissibility_rejects_nonadjacent():
    m = me.build_uniform_mesh((0, 0), (1, 1), (3, 3))
    with pytest.raises(ConfigError):
        me.transmissibility(m, IDENTITY, 0, 2)
    with pytest.raises(ConfigError):
        me.transmissibility(m, IDENTITY, 2, 3)  # row wrap is not an edge


def test_assembly_rejects_nonpositive_coefficient():
    m = me.build_uniform_mesh((0, 0), (1, 1), (3, 3))
    bad = co.DiagonalField(co.ScalarFieldSpec(-1.0), co.ScalarFieldSpec(1.0))
    with pytest.raises(AssemblyError, match="cell 0"):
        me.assemble_tpfa(m, bad)


def test_assembly_rejects_full_variable_field():
    m = me.build_uniform_mesh((0, 0), (1, 1), (3, 3))
    full = co.ConstantFullField(np.array([[2.0, 0.5], [0.5, 2.0]]))
    with pytest.raises(UnsupportedDiscretizationError):
        me.assemble_tpfa(m, full)


def test_single_cell_system():
    # four boundary edges with tau = 2 and unit source integral: u = 1/8
    m = me.build_uniform_mesh((0, 0), (1, 1), (1, 1))
    system = me.assemble_tpfa(m, IDENTITY, None, lambda p: np.ones(len(p)))
    assert system.matrix.to_dense() == pytest.approx(np.array([[8.0]]))
    assert system.rhs == pytest.approx(np.array([1.0]))


def test_affine_boundary_data_reproduced_exactly():
    m = me.build_uniform_mesh((0, 0), (1, 1), (4, 4))
    system = me.assemble_tpfa(m, IDENTITY, lambda p: p[:, 0], None)
    x = solve(system)
    assert np.abs(x - m.cell_centers()[:, 0]).max() < 1e-11


def manufactured_l2_error(n):
    m = me.build_uniform_mesh((-1.0, -1.0), (2.0, 2.0), (n, n))

    def exact(p):
        return np.sin(math.pi * p[:, 0]) * np.sin(math.pi * p[:, 1])

    system = me.assemble_tpfa(m, IDENTITY, None, lambda p: 2 * math.pi**2 * exact(p))
    x = solve(system)
    err = me.GridField(m, x - exact(m.cell_centers()))
    return me.discrete_norms(m, err)["l2"]


def test_manufactured_solution_second_order():
    e1, e2 = manufactured_l2_error(16), manufactured_l2_error(32)
    assert 3.5 <= e1 / e2 <= 4.5


def test_matrix_symmetry_exactly_zero():
    fld = co.builtin("asymptotic_periodic_paper")
    m = me.build_uniform_mesh((-1, -1), (2, 2), (10, 10))
    a = me.assemble_tpfa(m, fld).matrix
    assert np.abs(a.to_dense() - a.to_dense().T).max() == 0.0


def random_positive_field(rng):
    c1, c2 = rng.uniform(1.0, 5.0, size=2)
    return co.DiagonalField(
        co.ScalarFieldSpec(
            c1, (co.TrigTerm(rng.uniform(0, 0.5) * c1, "cos", tuple(rng.uniform(-4, 4, 2))),)
        ),
        co.ScalarFieldSpec(
            c2, (co.TrigTerm(rng.uniform(0, 0.5) * c2, "sin", tuple(rng.uniform(-4, 4, 2))),)
        ),
    )


def test_m_matrix_structure_on_random_fields():
    rng = np.random.default_rng(42)
    m = me.build_uniform_mesh((0, 0), (1, 1), (6, 6))
    for _ in range(10):
        a = me.assemble_tpfa(m, random_positive_field(rng)).matrix
        dense = a.to_dense()
        off = dense - np.diag(np.diag(dense))
        assert np.all(off <= 0.0)
        assert np.all(np.diag(dense) > 0.0)
        row_sums = dense.sum(axis=1)
        assert np.all(row_sums >= -1e-9)
        # rows touching the boundary keep strictly positive sums
        boundary = sorted(
            set(
                int(c)
                for side in ("left", "right", "bottom", "top")
                for c in me._boundary_cells(m, side)[0]
            )
        )
        assert np.all(row_sums[boundary] > 0.0)


def test_discrete_maximum_principle_random_fields():
    rng = np.random.default_rng(2024)
    m = me.build_uniform_mesh((0, 0), (1, 1), (8, 8))

    def g(p):
        return np.sin(2.0 * p[:, 0]) + 0.5 * np.cos(3.0 * p[:, 1])

    lo = min(g(me._boundary_cells(m, s)[1]).min() for s in ("left", "right", "bottom", "top"))
    hi = max(g(me._boundary_cells(m, s)[1]).max() for s in ("left", "right", "bottom", "top"))
    for _ in range(10):
        system = me.assemble_tpfa(m, random_positive_field(rng), g, None)
        x = solve(system)
        assert x.min() >= lo - 1e-9
        assert x.max() <= hi + 1e-9


def test_flux_antisymmetry_exact():
    rng = np.random.default_rng(11)
    m = me.build_uniform_mesh((0, 0), (1, 1), (7, 5))
    fld = random_positive_field(rng)
    u = me.GridField(m, rng.standard_normal(m.n_cells))
    fi, fj = me.interior_edge_fluxes(m, fld, u)
    assert np.array_equal(fi, -fj)


def test_interior_row_conservation():
    # rows without boundary edges sum to zero up to summation rounding
    rng = np.random.default_rng(8)
    m = me.build_uniform_mesh((0, 0), (1, 1), (5, 5))
    a = me.assemble_tpfa(m, random_positive_field(rng)).matrix
    dense = a.to_dense()
    interior = [m.cell_index(ix, iy) for ix in range(1, 4) for iy in range(1, 4)]
    scale = np.abs(np.diag(dense)).max()
    assert np.abs(dense[interior].sum(axis=1)).max() <= 1e-14 * scale


def test_const_full_reduces_to_tpfa_bit_identical():
    m = me.build_uniform_mesh((0, 0), (1, 1), (6, 6))
    fld = co.DiagonalField(co.ScalarFieldSpec(2.0), co.ScalarFieldSpec(3.0))

    def g(p):
        return p[:, 0] + 2.0 * p[:, 1]

    def f(p):
        return np.ones(len(p))

    sys_diag = me.assemble_tpfa(m, fld, g, f)
    sys_full = me.assemble_const_full(m, np.diag([2.0, 3.0]), g, f)
    assert np.array_equal(sys_diag.matrix.row_ptr, sys_full.matrix.row_ptr)
    assert np.array_equal(sys_diag.matrix.col_idx, sys_full.matrix.col_idx)
    assert np.array_equal(sys_diag.matrix.values, sys_full.matrix.values)
    assert np.array_equal(sys_diag.rhs, sys_full.rhs)


def test_const_full_exact_on_bilinear_product():
    # u = x*y solves -div(m grad u) = -2*m12 with its own trace as boundary data
    m = me.build_uniform_mesh((0, 0), (1, 1), (8, 8))
    mat = np.array([[1.0, 0.5], [0.5, 1.0]])
    system = me.assemble_const_full(
        m, mat, lambda p: p[:, 0] * p[:, 1], lambda p: np.full(len(p), -1.0)
    )
    x = solve(system, tol=1e-13)
    c = m.cell_centers()
    assert np.abs(x - c[:, 0] * c[:, 1]).max() < 1e-9


def test_const_full_accepts_published_effective_matrix():
    # slightly asymmetric input is symmetrized internally; SPD check passes
    m = me.build_uniform_mesh((-1, -1), (2, 2), (8, 8))
    a6 = np.array([[3.895923, 0.00001], [0.0, 2.849959]])
    system = me.assemble_const_full(m, a6, None, lambda p: np.ones(len(p)))
    assert np.isfinite(system.matrix.values).all()
    sym = 0.5 * (a6 + a6.T)
    assert np.linalg.eigvalsh(sym).min() > 0.0


def test_const_full_rejects_non_spd():
    m = me.build_uniform_mesh((0, 0), (1, 1), (4, 4))
    with pytest.raises(ConfigError):
        me.assemble_const_full(m, np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_const_full_structural_symmetry():
    m = me.build_uniform_mesh((0, 0), (1, 1), (6, 6))
    a = me.assemble_const_full(m, np.array([[2.0, 0.4], [0.4, 1.5]])).matrix
    dense = a.to_dense()
    assert np.array_equal(dense != 0.0, dense.T != 0.0)


def test_discrete_norms_constant_field():
    m = me.build_uniform_mesh((0, 0), (1, 1), (10, 10))
    u = me.GridField(m, np.full(m.n_cells, -3.0))
    norms = me.discrete_norms(m, u)
    assert norms["l2"] == pytest.approx(3.0, rel=1e-14)
    assert norms["h1"] == pytest.approx(3.0, rel=1e-14)  # zero seminorm without BC terms


def test_h1_seminorm_of_linear_field_approaches_one():
    # |grad x1|^2 integrates to 1 on the unit square
    vals = []
    for n in (8, 16):
        m = me.build_uniform_mesh((0, 0), (1, 1), (n, n))
        u = me.GridField(m, m.cell_centers()[:, 0])
        semi_sq = me.discrete_norms(m, u)["h1"] ** 2 - me.discrete_norms(m, u)["l2"] ** 2
        vals.append(semi_sq)
    assert abs(vals[1] - 1.0) < abs(vals[0] - 1.0)
    assert vals[1] == pytest.approx(1.0, rel=0.2)


def test_norms_reject_foreign_mesh():
    m1 = me.build_uniform_mesh((0, 0), (1, 1), (4, 4))
    m2 = me.build_uniform_mesh((0, 0), (1, 1), (5, 5))
    u = me.GridField(m2, np.zeros(m2.n_cells))
    with pytest.raises(MeshMismatchError):
        me.discrete_norms(m1, u)


def test_grid_dump_round_trip(tmp_path):
    m = me.build_uniform_mesh((-1.0, 0.5), (2.0, 1.5), (6, 4))
    rng = np.random.default_rng(17)
    u = me.GridField(m, rng.standard_normal(m.n_cells))
    path = tmp_path / "field.grid"
    me.dump_grid(u, path)
    back = me.load_grid(path)
    assert np.array_equal(back.values, u.values)
    assert me.meshes_compatible(back.mesh, m)
