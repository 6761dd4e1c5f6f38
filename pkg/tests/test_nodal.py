import json
import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from nodalknots.helmholtz import FourierBesselField
from nodalknots.nodal import (
    Ball,
    Box,
    NodalCurve,
    RegionUnion,
    curves_from_json,
    curves_to_csv,
    curves_to_json,
    curves_to_obj,
    curves_to_vtk,
    extract_nodal_curves,
    near_reference,
    perturb_and_retrace,
    random_eigenspace_perturbation,
    region_from_json,
    smallest_singular,
    transversality_margin,
    useful_degree,
)
from nodalknots.oscillator import eval_rescaled, lift
from nodalknots.specfun import DomainError
from nodalknots.topology import linking_number


def line_field(scale=1.0):
    """``scale * (x + i y)``; zero set is the z axis with margin ``scale``."""
    def fn(x):
        v = scale * (x[:, 0] + 1j * x[:, 1])
        g = np.zeros((len(x), 3), complex)
        g[:, 0] = scale
        g[:, 1] = 1j * scale
        return v, g
    return fn


def circle(centre=(0, 0, 0), axes=(0, 1, 2)):
    """``(u^2 + v^2 - 1) + i w`` around ``centre``; unit circle in the (u, v) plane."""
    c = np.asarray(centre, float)
    a, b, n = axes

    def fn(x):
        y = x - c
        v = y[:, a] ** 2 + y[:, b] ** 2 - 1 + 1j * y[:, n]
        g = np.zeros((len(x), 3), complex)
        g[:, a] = 2 * y[:, a]
        g[:, b] = 2 * y[:, b]
        g[:, n] = 1j
        return v, g
    return fn


def product(*fns):
    def fn(x):
        vals, grads = zip(*(f(x) for f in fns))
        v = np.prod(vals, axis=0)
        g = np.zeros_like(grads[0])
        for i in range(len(fns)):
            others = np.prod([vals[j] for j in range(len(fns)) if j != i], axis=0)
            g += others[:, None] * grads[i]
        return v, g
    return fn


BOX = Box((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))


def test_line_gives_one_open_curve():
    res = extract_nodal_curves(line_field(), BOX, grid_res=16)
    assert len(res.curves) == 1
    c = res.curves[0]
    assert not c.closed and c.flag == ""
    np.testing.assert_allclose(c.vertices[:, :2], 0, atol=1e-10)
    assert c.vertices[:, 2].min() < -1.9 and c.vertices[:, 2].max() > 1.9
    np.testing.assert_allclose(c.margins, 1.0, rtol=1e-12)


@pytest.mark.parametrize("scale", [0.1, 3.0])
def test_margin_scales_linearly(scale):
    res = extract_nodal_curves(line_field(scale), BOX, grid_res=16)
    assert res.curves[0].min_margin == pytest.approx(scale, rel=1e-12)


def test_unit_circle():
    res = extract_nodal_curves(circle(), BOX, grid_res=16)
    assert len(res.closed) == 1 and not res.open
    c = res.closed[0]
    np.testing.assert_allclose(np.linalg.norm(c.vertices[:, :2], axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(c.vertices[:, 2], 0.0, atol=1e-9)
    assert c.arc_length == pytest.approx(2 * math.pi, rel=1e-3)
    # singular values of [2x 2y 0; 0 0 1] on the circle are 2 and 1
    np.testing.assert_allclose(c.margins, 1.0, rtol=1e-8)
    rep = transversality_margin(circle(), c)
    assert rep.min == pytest.approx(1.0, rel=1e-8)


def test_step_spacing_and_no_repeated_vertex():
    res = extract_nodal_curves(circle(), BOX, grid_res=16, step=0.05)
    c = res.closed[0]
    seg = np.linalg.norm(np.diff(np.vstack([c.vertices, c.vertices[:1]]), axis=0), axis=1)
    assert seg.max() < 0.05 * 1.05
    assert seg.min() > 0.05 * 0.25
    assert np.linalg.norm(c.vertices[0] - c.vertices[-1]) > 1e-6


def test_orientation_follows_cross_product():
    c = extract_nodal_curves(circle(), BOX, grid_res=16).closed[0]
    _, g = circle()(c.vertices)
    t = np.cross(g.real, g.imag)
    d = np.roll(c.vertices, -1, axis=0) - c.vertices
    assert np.all(np.einsum("ij,ij->i", t, d) > 0)


def test_hopf_pair_links():
    f = product(circle(), circle(centre=(1, 0, 0), axes=(0, 2, 1)))
    res = extract_nodal_curves(f, Box((-2.5, -2.5, -2.5), (2.5, 2.5, 2.5)), grid_res=24)
    assert len(res.closed) == 2 and not res.open
    assert abs(linking_number(res.closed[0].vertices, res.closed[1].vertices)) == 1


def test_mirror_symmetric_field_gives_mirrored_curves():
    c = np.array([2.0, 0.5, 0.0])
    f = product(circle(centre=c), circle(centre=-c))
    box = Box((0.5, -1.0, -1.5), (3.5, 2.0, 1.5))
    region = RegionUnion((box, box.mirrored()))
    res = extract_nodal_curves(f, region, grid_res=20)
    assert len(res.closed) == 2
    a, b = sorted(res.closed, key=lambda k: k.centroid()[0])
    d, _ = cKDTree(b.vertices).query(-a.vertices)
    assert d.max() < res.step


def test_extraction_is_deterministic():
    f = product(circle(), circle(centre=(1, 0, 0), axes=(0, 2, 1)))
    box = Box((-2.5, -2.5, -2.5), (2.5, 2.5, 2.5))
    a = extract_nodal_curves(f, box, grid_res=16)
    b = extract_nodal_curves(f, box, grid_res=16)
    assert curves_to_json(a.curves) == curves_to_json(b.curves)


def test_grid_res_minimum():
    with pytest.raises(ValueError):
        extract_nodal_curves(circle(), BOX, grid_res=8)


def test_smallest_singular_known():
    g = np.array([[[3, 0, 0], [0, 0, 0.5]]], float)
    gc = g[:, 0] + 1j * g[:, 1]
    assert smallest_singular(gc)[0] == pytest.approx(0.5)


def test_regions():
    ball = Ball((0, 0, 0), 1.0)
    assert ball.contains([[0.5, 0, 0]])[0] and not ball.contains([[1.5, 0, 0]])[0]
    box = Box((0, 0, 0), (1, 2, 3))
    assert box.mirrored() == Box((-1, -2, -3), (0, 0, 0))
    u = RegionUnion((box, ball))
    assert region_from_json(json.loads(json.dumps(u.to_json()))) == u
    lo, hi = u.bounds
    np.testing.assert_allclose(lo, [-1, -1, -1])
    np.testing.assert_allclose(hi, [1, 2, 3])


def test_near_reference_splits():
    res = extract_nodal_curves(product(circle(), circle(centre=(0, 0, 3))),
                               Box((-2, -2, -1), (2, 2, 4)), grid_res=20)
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    ref = [np.stack([np.cos(t), np.sin(t), 0 * t], 1)]
    near, far = near_reference(res.closed, ref, 0.05)
    assert len(near) == 1 and len(far) == 1
    assert abs(near[0].centroid()[2]) < 1e-6


def test_exports():
    curves = extract_nodal_curves(circle(), BOX, grid_res=16).curves
    n = len(curves[0].vertices)
    obj = curves_to_obj(curves).splitlines()
    assert sum(l.startswith("v ") for l in obj) == n
    line = [l for l in obj if l.startswith("l ")][0].split()
    assert line[1] == line[-1] == "1"
    csv_lines = curves_to_csv(curves).splitlines()
    assert csv_lines[0] == "curveId,x,y,z,margin" and len(csv_lines) == n + 1
    vtk = curves_to_vtk(curves).splitlines()
    assert vtk[0].startswith("# vtk") and f"POINTS {n} double" in vtk
    assert f"LINES 1 {n + 2}" in vtk
    back = curves_from_json(curves_to_json(curves))
    np.testing.assert_array_equal(back[0].vertices, curves[0].vertices)
    assert back[0].closed


def test_from_points_and_reverse():
    t = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    c = NodalCurve.from_points(np.stack([np.cos(t), np.sin(t), 0 * t], 1))
    assert c.closed and c.arc_length == pytest.approx(2 * math.pi, rel=1e-2)
    np.testing.assert_array_equal(c.reversed().vertices[0], c.vertices[-1])


def test_useful_degree_grows_with_radius():
    assert useful_degree(1.0) < useful_degree(5.0) < useful_degree(20.0)
    assert useful_degree(5.0) % 2 == 0


def test_perturbation_is_exact_eigenfunction():
    rng = np.random.default_rng(0)
    p = random_eigenspace_perturbation(83, rng, lmax=6)
    assert p.eigenvalue == 83
    assert max(i.l for i, _ in p.modes) <= 6
    assert len(p.modes) == sum(2 * l + 1 for l in range(0, 7, 2))


def _small_psi():
    f = FourierBesselField.from_dict(2, {(0, 0): 0.3, (2, 1): 1.0})
    return lift(f, 64)


def _count(res):
    return f"{len(res.closed)}/{len(res.open)}"


def test_stability_control_and_domain():
    psi = _small_psi()
    region = Box((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5))
    rep = perturb_and_retrace(psi, 0.0, 3, 0, region, _count, margin=1.0, grid_res=16)
    assert rep.preserved == 3 and rep.signatures == [rep.reference] * 3
    with pytest.raises(DomainError):
        perturb_and_retrace(psi, -0.1, 3, 0, region, _count, margin=1.0)
    with pytest.raises(DomainError):
        perturb_and_retrace(psi, 0.1, 0, 0, region, _count, margin=1.0)


def test_stability_small_perturbation_preserves():
    psi = _small_psi()
    region = Box((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5))
    margin = min(c.min_margin for c in extract_nodal_curves(
        lambda x: eval_rescaled(psi, x), region, 16).curves)
    rep = perturb_and_retrace(psi, 0.05, 2, 1, region, _count, margin=margin, grid_res=16)
    assert rep.preserved == 2
    assert rep.epsilon == pytest.approx(0.05 * margin)
