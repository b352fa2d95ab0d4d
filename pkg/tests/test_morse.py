import numpy as np
import pytest

from geolab.charts import make_chart
from geolab.errors import CrossCheckError
from geolab.loops import DiscreteLoop, energy_gradient, iterate, make_loop
from geolab.morse import (
    SecondVariation,
    assemble_second_variation,
    based_index_cross_check,
    bott_table,
    dirichlet_index,
    index_and_nullity,
    lemma_index_bound_check,
)
from geolab.penalty import PenaltySchedule

from conftest import circle_nodes, great_circle_loop, waist_loop


def hessian_matches_fd(chart, loop, schedule=None, alpha=None, n_dirs=3, seed=0):
    sv = assemble_second_variation(chart, loop, schedule, alpha)
    rng = np.random.default_rng(seed)
    h = 1e-6
    worst = 0.0
    for _ in range(n_dirs):
        u = rng.standard_normal(loop.nodes.shape)
        if schedule is None:
            gp = energy_gradient(chart, DiscreteLoop(loop.nodes + h * u, frame=loop.frame))
            gm = energy_gradient(chart, DiscreteLoop(loop.nodes - h * u, frame=loop.frame))
        else:
            from geolab.penalty import penalized_gradient
            gp = penalized_gradient(chart, schedule, alpha,
                                    DiscreteLoop(loop.nodes + h * u, frame=loop.frame))
            gm = penalized_gradient(chart, schedule, alpha,
                                    DiscreteLoop(loop.nodes - h * u, frame=loop.frame))
        fd = (gp - gm).ravel() / (2 * h)
        hv = sv.matrix @ u.ravel()
        worst = max(worst, np.max(np.abs(hv - fd)) / max(np.max(np.abs(fd)), 1e-12))
    return worst


def test_hessian_symmetric_and_matches_fd_control():
    # the flat polygon is not critical: pure assembly consistency check
    plane = make_chart("plane")
    loop = make_loop(plane, circle_nodes(1.0, 48))
    sv = assemble_second_variation(plane, loop)
    assert np.array_equal(sv.matrix, sv.matrix.T)
    assert not sv.critical
    assert hessian_matches_fd(plane, loop) < 1e-5


def test_hessian_matches_fd_curved_charts(rng):
    fun = make_chart("funnel")
    ts = 2 * np.pi * np.arange(40) / 40
    nodes = np.stack([0.3 * np.sin(2 * ts) + 0.2, ts], axis=1)
    loop = make_loop(fun, nodes)
    assert hessian_matches_fd(fun, loop) < 1e-5
    sched = PenaltySchedule(r0=0.1, dr=1.0, stiffness=2.0)
    assert hessian_matches_fd(fun, loop, sched, 0) < 1e-5


def test_constant_loop_spectrum():
    plane = make_chart("plane")
    loop = make_loop(plane, np.broadcast_to([0.4, -0.2], (32, 2)).copy())
    spec = index_and_nullity(assemble_second_variation(plane, loop))
    assert spec.index == 0
    assert spec.nullity == 2  # the two translation fields
    assert np.all(spec.eigenvalues >= -spec.zero_band)
    assert spec.index + spec.nullity + spec.positive_count == 64


def test_index_and_nullity_band_logic():
    n, d = 16, 2
    eigs = np.concatenate([[-40.0, -3.0], np.zeros(3), np.full(n * d - 5, 50.0)])
    sv = SecondVariation(matrix=np.diag(eigs / n), method="exact_discrete",
                         n_nodes=n, dim=d)
    spec = index_and_nullity(sv)
    assert (spec.index, spec.nullity) == (2, 3)
    assert not spec.ambiguous
    # an eigenvalue close to the band edge flips the ambiguity flag
    eigs[2] = spec.zero_band * 2.0
    sv2 = SecondVariation(matrix=np.diag(eigs / n), method="exact_discrete",
                          n_nodes=n, dim=d)
    assert index_and_nullity(sv2).ambiguous
    with pytest.raises(ValueError):
        index_and_nullity(sv, zero_band=0.0)


def test_sphere_great_circle_index_nullity():
    sph = make_chart("sphere")
    loop = great_circle_loop(sph, 256)
    spec = index_and_nullity(assemble_second_variation(sph, loop))
    assert (spec.index, spec.nullity) == (1, 3)
    spec_q = index_and_nullity(
        assemble_second_variation(sph, loop, method="continuum_quadrature"))
    assert (spec_q.index, spec_q.nullity) == (1, 3)


def test_sphere_second_iterate_index_nullity():
    sph = make_chart("sphere")
    loop = iterate(great_circle_loop(sph, 256), 2)
    spec = index_and_nullity(assemble_second_variation(sph, loop))
    assert (spec.index, spec.nullity) == (3, 3)


def test_cylinder_circle_index_nullity():
    cyl = make_chart("cylinder")
    spec = index_and_nullity(assemble_second_variation(cyl, waist_loop(cyl, 256)))
    assert (spec.index, spec.nullity) == (0, 2)


def test_funnel_waist_index_nullity():
    fun = make_chart("funnel")
    spec = index_and_nullity(assemble_second_variation(fun, waist_loop(fun, 256)))
    assert (spec.index, spec.nullity) == (0, 1)


def test_quadrature_assembly_agrees_on_zoo_geodesics():
    for name, loop_fn in [("cylinder", waist_loop), ("funnel", waist_loop)]:
        chart = make_chart(name)
        loop = loop_fn(chart, 256)
        s1 = index_and_nullity(assemble_second_variation(chart, loop))
        s2 = index_and_nullity(
            assemble_second_variation(chart, loop, method="continuum_quadrature"))
        assert (s1.index, s1.nullity) == (s2.index, s2.nullity)


def test_assembly_rejects_unknown_method():
    plane = make_chart("plane")
    loop = make_loop(plane, circle_nodes(0.5, 16))
    with pytest.raises(ValueError):
        assemble_second_variation(plane, loop, method="magic")


def test_based_index_flat_zero():
    cyl = make_chart("cylinder")
    out = based_index_cross_check(cyl, waist_loop(cyl, 256))
    assert out["dirichlet_index"] == 0 and out["cp_open"] == 0


def test_based_index_sphere_one_and_three():
    sph = make_chart("sphere")
    loop = great_circle_loop(sph, 256)
    out = based_index_cross_check(sph, loop)
    assert out["dirichlet_index"] == 1 and out["cp_open"] == 1
    out2 = based_index_cross_check(sph, iterate(loop, 2))
    assert out2["dirichlet_index"] == 3 and out2["cp_open"] == 3


def test_dirichlet_pinning_strictly_smaller_system():
    fun = make_chart("funnel")
    loop = waist_loop(fun, 64)
    assert dirichlet_index(fun, loop) == 0


def test_lemma_bound_cylinder_boundary_case():
    cyl = make_chart("cylinder")
    out = lemma_index_bound_check(cyl, waist_loop(cyl, 256))
    assert out == {"cp1": 0, "index": 0, "nullity": 2, "dim": 2, "verdict": "pass"}


def test_lemma_bound_sphere_hypothesis_fails():
    # cp_1 = 2 and ind + nul = 4 > 2: the hypothesis is sharp
    sph = make_chart("sphere")
    out = lemma_index_bound_check(sph, great_circle_loop(sph, 256))
    assert out["cp1"] == 2
    assert out["verdict"] == "not_applicable"
    assert out["index"] + out["nullity"] > out["dim"]


def test_lemma_bound_constant_loop():
    plane = make_chart("plane")
    loop = make_loop(plane, np.broadcast_to([0.1, 0.2], (32, 2)).copy())
    out = lemma_index_bound_check(plane, loop)
    assert out["cp1"] == 0 and out["verdict"] == "pass"


def test_lemma_bound_corner_point(corner_point):
    fc = corner_point
    out = lemma_index_bound_check(fc["chart"], fc["loop_at"](256),
                                  fc["schedule"], fc["alpha"])
    # the arc stays in moderate curvature; when its conjugate count
    # vanishes the bound must hold
    if out["cp1"] == 0:
        assert out["verdict"] == "pass"
    else:
        assert out["verdict"] == "not_applicable"


def test_bott_table_sphere():
    sph = make_chart("sphere")
    loop = great_circle_loop(sph, 128)
    table = bott_table(sph, loop, m_max=6)
    inds = [r["index"] for r in table["rows"]]
    nuls = [r["nullity"] for r in table["rows"]]
    assert inds == [2 * m - 1 for m in range(1, 7)]
    assert nuls == [3] * 6
    assert abs(table["average_index_slope"] - 2.0) < 0.05
    assert table["bounds_ok"]
    assert all(r["right_equality"] for r in table["rows"])
    assert table["nullity_partition"] == {"3": [1, 2, 3, 4, 5, 6]}


def test_bott_table_cylinder():
    cyl = make_chart("cylinder")
    table = bott_table(cyl, waist_loop(cyl, 128), m_max=6)
    assert [r["index"] for r in table["rows"]] == [0] * 6
    assert [r["nullity"] for r in table["rows"]] == [2] * 6
    assert abs(table["average_index_slope"]) < 0.05
    assert table["bounds_ok"]


def test_bott_table_funnel():
    fun = make_chart("funnel")
    table = bott_table(fun, waist_loop(fun, 128), m_max=4)
    assert [r["index"] for r in table["rows"]] == [0] * 4
    assert [r["nullity"] for r in table["rows"]] == [1] * 4
    assert table["bounds_ok"]


def test_index_nondecreasing_under_iteration():
    sph = make_chart("sphere")
    loop = great_circle_loop(sph, 128)
    inds = []
    for m in (1, 2, 3):
        spec = index_and_nullity(assemble_second_variation(sph, iterate(loop, m)))
        inds.append(spec.index)
    assert inds == sorted(inds)
