import json
import math

import numpy as np
import pytest

from nodalknots.helmholtz import (
    ConfigurationError,
    FourierBesselField,
    Placement,
    PointSourceField,
    SampleSet,
    SingularityError,
    auto_fit,
    default_placement,
    eval_field,
    field_distance,
    fit_coefficients,
    greens_eval,
    greens_sweep,
    greens_with_gradient,
    jet_margin,
    laplacian_fd,
    link_samples,
    milnor_seed,
    parse_preset,
    project_fourier_bessel,
    riemann_sources,
)
from nodalknots.helmholtz.fields import basis_labels
from nodalknots.nodal import Box, extract_nodal_curves, smallest_singular
from nodalknots.specfun import DomainError
from nodalknots.topology import classify_link


def random_even_field(l0, seed=0):
    rng = np.random.default_rng(seed)
    labels = basis_labels(l0, even=True)
    vals = rng.normal(size=len(labels)) + 1j * rng.normal(size=len(labels))
    return FourierBesselField.from_labels(l0, labels, vals)


def ball_points(n, radius, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return d * radius * rng.uniform(0, 1, (n, 1)) ** (1 / 3)


@pytest.fixture(scope="module")
def hopf_seed():
    return milnor_seed("hopf")


class TestFourierBessel:
    def test_j0_zero(self):
        f = FourierBesselField.from_dict(0, {(0, 0): 1.0})
        v, _ = f.evaluate(np.array([math.pi, 0, 0]))
        assert abs(v) < 1e-15

    def test_helmholtz_residual(self):
        f = random_even_field(8, seed=1)
        x = ball_points(200, 4.0, seed=2)
        lap = laplacian_fd(lambda p: f.evaluate(p)[0], x, 0.05)
        v = f.evaluate(x)[0]
        assert np.max(np.abs(lap + v)) < 1e-6 * np.max(np.abs(v))

    def test_even(self):
        f = random_even_field(10, seed=3)
        x = ball_points(50, 5.0, seed=4)
        a, ga = f.evaluate(x)
        b, gb = f.evaluate(-x)
        assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))
        assert np.max(np.abs(ga + gb)) <= 1e-12 * np.max(np.abs(ga))
        assert f.is_even

    def test_gradient_fd(self):
        f = random_even_field(6, seed=5)
        x = np.array([0.7, -1.1, 0.4])
        _, g = f.evaluate(x)
        h = 1e-6
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            fd = (f.evaluate(x + e)[0] - f.evaluate(x - e)[0]) / (2 * h)
            assert g[a] == pytest.approx(fd, abs=1e-7)

    def test_json_roundtrip(self, tmp_path):
        f = random_even_field(4, seed=6)
        path = tmp_path / "c.json"
        f.save(path)
        doc = json.loads(path.read_text())
        assert set(doc) == {"l0", "entries"}
        assert set(doc["entries"][0]) == {"l", "m", "re", "im"}
        g = FourierBesselField.load(path)
        assert np.array_equal(f.coeffs, g.coeffs)


class TestPointSources:
    def test_quarter_wave_zero(self):
        z = np.array([1.0, 2.0, -0.5])
        f = PointSourceField(z[None], [1.0])
        x = z + np.array([0, math.pi / 2, 0])
        assert abs(f.evaluate(x)[0]) < 1e-16
        assert abs(greens_eval(x, z)) < 1e-16

    def test_radial_symmetry(self):
        x = np.array([0.3, -1.2, 0.8])
        assert greens_eval(x) == greens_eval(-x)

    def test_helmholtz_fd(self):
        x = np.array([[1.0, 0, 0], [0, 0.6, 0.8]])
        lap = laplacian_fd(lambda p: greens_eval(p), x, 1e-2)
        res = lap + greens_eval(x)
        assert np.max(np.abs(res)) < 1e-6

    def test_gradient(self):
        x = np.array([0.4, 0.9, -0.3])
        _, g = greens_with_gradient(x)
        h = 1e-6
        fd = [(greens_eval(x + h * e) - greens_eval(x - h * e)) / (2 * h) for e in np.eye(3)]
        np.testing.assert_allclose(g, fd, atol=1e-8)

    def test_singularity(self):
        with pytest.raises(SingularityError):
            greens_eval(np.zeros(3))
        f = PointSourceField([[1, 1, 1]], [2.0])
        with pytest.raises(SingularityError):
            f.evaluate(np.array([1.0, 1.0, 1.0]))


class TestDistance:
    def test_examples(self):
        f = random_even_field(4, seed=7)
        pts = ball_points(40, 2.0)
        assert field_distance(f, f, pts) == 0.0
        shifted = lambda x: (f.evaluate(x)[0] + 1e-3, f.evaluate(x)[1])
        assert field_distance(f, shifted, pts, 0) == pytest.approx(1e-3, rel=1e-9)
        g = random_even_field(4, seed=8)
        assert field_distance(f, g, pts, 1) >= field_distance(f, g, pts, 0)


class TestSeeds:
    def test_presets(self):
        assert parse_preset("hopf") == ("torus", 2, 2)
        assert parse_preset("torus(3,4)") == ("torus", 3, 4)
        with pytest.raises(ConfigurationError):
            parse_preset("figure8")

    @pytest.mark.parametrize("preset,count", [("unknot", 1), ("hopf", 2), ("trefoil", 1), ("solomon", 2),
                                              ("borromean", 3)])
    def test_link_in_octant_and_transverse(self, preset, count):
        s = milnor_seed(preset)
        assert len(s.curves) == count
        pts = np.concatenate(s.curves)
        assert np.all(pts > 4 * s.tube_radius)
        v, g = s.evaluate(pts)
        assert np.max(np.abs(v)) < 1e-8
        assert smallest_singular(g).min() > 0.2

    def test_gauge_normalises_margin(self, hopf_seed):
        _, g = hopf_seed.link_jet(50)
        m = jet_margin(g)
        assert 0.5 < m.min() and m.max() < 1.5

    def test_placement_violation(self):
        kind = parse_preset("hopf")
        pl = default_placement(kind)
        with pytest.raises(ConfigurationError):
            milnor_seed("hopf", Placement(pl.scale, (0.0, 0.0, 0.0)))
        with pytest.raises(ConfigurationError):
            milnor_seed("hopf", pl, ball_radius=1.0)

    @pytest.mark.parametrize("preset,count,dets,lk", [
        ("unknot", 1, [1], None),
        ("hopf", 2, [1, 1], 1),
        ("trefoil", 1, [3], None),
    ])
    def test_seed_extraction(self, preset, count, dets, lk):
        s = milnor_seed(preset)
        lo, hi = s.bounding_box(1.5 * s.tube_radius)
        res = extract_nodal_curves(s.evaluate, Box(tuple(lo), tuple(hi)), 24)
        rep = classify_link(res.closed, preset)
        assert rep.component_count == count
        assert sorted(rep.determinants) == dets
        if lk is not None:
            assert abs(rep.linking_matrix[0][1]) == lk
        assert rep.matches_target


class TestSamples:
    def test_csv_roundtrip(self, hopf_seed, tmp_path):
        s = link_samples(hopf_seed, 10)
        path = tmp_path / "s.csv"
        s.save(path)
        header = path.read_text().splitlines()[0]
        assert header == "x,y,z,reV,imV,reGx,imGx,reGy,imGy,reGz,imGz,weight"
        t = SampleSet.load(path)
        assert np.array_equal(s.points, t.points)
        assert np.array_equal(s.gradients, t.gradients)

    def test_symmetric(self, hopf_seed):
        s = link_samples(hopf_seed, 10)
        assert s.is_symmetric()
        assert not link_samples(hopf_seed, 10, symmetric=False).is_symmetric()

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            SampleSet(np.zeros((1, 3)), [0], np.zeros((1, 3)), [-1.0])


class TestFit:
    def test_exact_representability(self):
        target = random_even_field(4, seed=9)
        pts = ball_points(60, 3.0, seed=10)
        pts = np.concatenate([pts, -pts])
        v, g = target.evaluate(pts)
        fit = fit_coefficients(None, 6, SampleSet(pts, v, g), regularization=1e-14, length=1.0)
        np.testing.assert_allclose(fit.coeffs[: target.coeffs.size], target.coeffs, atol=1e-10)
        assert np.max(np.abs(fit.coeffs[target.coeffs.size:])) < 1e-10

    def test_odd_degrees_zero(self, hopf_seed):
        f = fit_coefficients(hopf_seed, 8)
        assert f.max_odd() == 0.0
        for l in range(1, 9, 2):
            assert np.all(f.coeffs[l * l:(l + 1) ** 2] == 0)

    def test_residual_nonincreasing_in_l0(self, hopf_seed):
        res = [fit_coefficients(hopf_seed, l0).meta["c1Residual"] for l0 in (8, 12, 16)]
        assert res[0] >= res[1] >= res[2]

    def test_rank_warning_not_failure(self, hopf_seed, caplog):
        f = fit_coefficients(hopf_seed, 16)
        assert f.meta["rank"] <= f.meta["columns"]
        if f.meta["rank"] < f.meta["columns"]:
            assert "warning" in f.meta

    def test_auto_fit_hopf(self, hopf_seed):
        af = auto_fit(hopf_seed)
        assert af.accepted
        assert af.field.meta["c1Residual"] < af.delta
        pts = np.concatenate(hopf_seed.curves)
        assert smallest_singular(af.field.evaluate(pts)[1]).min() > 0
        assert af.field.is_even


def _phi1():
    return riemann_sources(lambda d: 1 + d[:, 0] ** 2 + 1j * d[:, 1] * d[:, 2], 1.5, 40)


def _sweep_samples():
    pts = ball_points(200, 0.8, seed=11)
    return np.concatenate([pts, -pts])


class TestSweep:
    def test_riemann_even(self):
        phi = _phi1()
        assert phi.is_mirror_symmetric()
        x = ball_points(10, 1.0)
        np.testing.assert_allclose(phi.evaluate(x)[0], phi.evaluate(-x)[0], rtol=1e-13)

    def test_single_pair_exact(self):
        pair = PointSourceField(np.array([[3.0, 0, 0], [-3.0, 0, 0]]), np.array([1.0, 1.0]))
        out = greens_sweep(pair, 2.0, _sweep_samples(), 1)
        assert out.meta["supError"] < 1e-12

    def test_monotone_and_symmetric(self):
        phi, S = _phi1(), _sweep_samples()
        errs = []
        for b in (8, 16, 32):
            out = greens_sweep(phi, 2.0, S, b)
            errs.append(out.meta["supError"])
            assert out.is_mirror_symmetric()
            assert np.all(np.linalg.norm(out.poles, axis=1) > 2.0)
            assert not np.any(np.all(out.poles == 0, axis=1))
        assert errs[0] >= errs[1] >= errs[2]

    def test_infeasible(self):
        with pytest.raises(ConfigurationError):
            greens_sweep(_phi1(), 2.0, _sweep_samples(), 0)
        with pytest.raises(ConfigurationError):
            greens_sweep(_phi1(), 0.5, _sweep_samples(), 4)


class TestProjection:
    def test_j0(self):
        f = FourierBesselField.from_dict(4, {(0, 0): 1.0})
        p = project_fourier_bessel(f, 4, 2.0)
        assert abs(p.coefficient(0, 0) - 1) < 1e-10
        rest = np.delete(p.coeffs, 0)
        assert np.max(np.abs(rest)) < 1e-10

    def test_rayleigh(self):
        plane = lambda x: (np.exp(1j * np.atleast_2d(x)[:, 2]), None)
        p = project_fourier_bessel(plane, 12, 8.0)
        for l in range(13):
            for m in range(-l, l + 1):
                ref = 1j**l * math.sqrt(4 * math.pi * (2 * l + 1)) if m == 0 else 0
                assert abs(p.coefficient(l, m) - ref) < 1e-8

    def test_point_source_projection_solves_helmholtz(self):
        src = PointSourceField(np.array([[2.5, 0.5, 0], [-2.5, -0.5, 0]]), np.array([1.0, 1.0]))
        p = project_fourier_bessel(src, 20, 2.0)
        assert p.is_even
        x = ball_points(30, 1.0, seed=12)
        lap = laplacian_fd(lambda q: p.evaluate(q)[0], x, 0.05)
        v = p.evaluate(x)[0]
        assert np.max(np.abs(lap + v)) < 1e-6 * np.max(np.abs(v))
        assert np.max(np.abs(v - src.evaluate(x)[0])) < 1e-6

    def test_pole_inside(self):
        src = PointSourceField(np.array([[1.0, 0, 0]]), np.array([1.0]))
        with pytest.raises(DomainError):
            project_fourier_bessel(src, 4, 2.0)

    def test_sweep_then_project(self):
        phi, S = _phi1(), _sweep_samples()
        swept = greens_sweep(phi, 2.0, S, 32)
        proj = project_fourier_bessel(swept, 30, 2.0)
        e_sweep = swept.meta["supError"]
        e_proj = float(np.max(np.abs(proj.evaluate(S)[0] - swept.evaluate(S)[0])))
        total = float(np.max(np.abs(proj.evaluate(S)[0] - phi.evaluate(S)[0])))
        assert total <= e_sweep + e_proj + 1e-15
        assert eval_field(proj, S[:2])[0].shape == (2,)
