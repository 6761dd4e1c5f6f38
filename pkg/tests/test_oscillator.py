import json
import math

import numpy as np
import pytest

from nodalknots.helmholtz import FourierBesselField
from nodalknots.oscillator import (
    OscillatorEigenfunction,
    ParityError,
    ball_grid,
    choose_khat,
    eigen_residual,
    enumerate_eigenspace,
    eval_eigenfunction,
    eval_rescaled,
    lift,
    rescaled_compare,
)
from nodalknots.specfun import DomainError, ModeIndex, eval_psi_klm


def _even_field():
    return FourierBesselField.from_dict(4, {
        (0, 0): 1.0,
        (2, 1): 0.3 - 0.2j,
        (2, -1): -0.3 - 0.2j,
        (4, 3): 0.05j,
        (4, 0): -0.1,
    })


@pytest.mark.parametrize("N", range(21))
def test_eigenspace_dimension(N):
    lam = 2 * N + 3
    modes = enumerate_eigenspace(lam)
    assert len(modes) == (N + 1) * (N + 2) // 2
    assert len(set(modes)) == len(modes)
    assert all(4 * m.k + 2 * m.l + 3 == lam for m in modes)
    assert all(m.l % 2 == N % 2 for m in modes)


@pytest.mark.parametrize("lam", [2, 1, 4, 7.5])
def test_eigenspace_rejects_bad_lambda(lam):
    with pytest.raises(DomainError):
        enumerate_eigenspace(lam)


def test_lift_puts_every_mode_on_one_eigenvalue():
    psi = lift(_even_field(), 40)
    assert psi.eigenvalue == 163
    assert {(i.l, i.k) for i, _ in psi.modes} == {(0, 40), (2, 39), (4, 38)}


def test_lift_rejects_odd_content():
    f = FourierBesselField.from_dict(3, {(0, 0): 1.0, (3, 1): 1e-3})
    with pytest.raises(ParityError):
        lift(f, 40)


def test_lift_rejects_small_khat():
    with pytest.raises(DomainError):
        lift(_even_field(), 2)


def test_mode_mismatch_is_rejected():
    with pytest.raises(DomainError):
        OscillatorEigenfunction(5, ((ModeIndex(5, 2, 0), 1.0),))


def test_single_mode_matches_direct_evaluation():
    idx = ModeIndex(6, 2, 1)
    psi = OscillatorEigenfunction(7, ((idx, 1.0),))
    x = np.random.default_rng(0).normal(size=(20, 3))
    direct = eval_psi_klm(idx, x)
    direct = direct[0] if isinstance(direct, tuple) else direct
    np.testing.assert_allclose(eval_eigenfunction(psi, x)[0], direct, rtol=1e-11, atol=1e-14)


def test_gradient_matches_finite_differences():
    psi = lift(_even_field(), 24)
    x = np.random.default_rng(1).normal(size=(8, 3))
    _, g = eval_eigenfunction(psi, x)
    h = 1e-6
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        fd = (eval_eigenfunction(psi, x + e)[0] - eval_eigenfunction(psi, x - e)[0]) / (2 * h)
        np.testing.assert_allclose(g[:, a], fd, rtol=1e-6, atol=1e-8 * np.abs(g).max())


def test_rescaled_matches_unscaled():
    psi = lift(_even_field(), 30)
    xt = np.random.default_rng(2).uniform(-3, 3, size=(30, 3))
    lam = psi.eigenvalue
    v, g = eval_rescaled(psi, xt)
    v0, g0 = eval_eigenfunction(psi, xt / math.sqrt(lam))
    np.testing.assert_allclose(v, v0, rtol=1e-11, atol=1e-14)
    np.testing.assert_allclose(g, g0 / math.sqrt(lam), rtol=1e-11, atol=1e-14)


@pytest.mark.parametrize("khat", [20, 60, 200])
def test_eigen_residual_small(khat):
    psi = lift(_even_field(), khat)
    rng = np.random.default_rng(khat)
    # sample where the mode has support
    pts = rng.normal(size=(100, 3)) * 0.5 * math.sqrt(psi.eigenvalue) / math.sqrt(3)
    assert eigen_residual(psi, pts) < 1e-6


def test_parity_even():
    psi = lift(_even_field(), 50)
    x = np.random.default_rng(3).normal(size=(100, 3)) * 3
    v = eval_eigenfunction(psi, x)[0]
    w = eval_eigenfunction(psi, -x)[0]
    assert np.max(np.abs(v - w)) <= 1e-10 * np.max(np.abs(v))


def test_json_round_trip(tmp_path):
    psi = lift(_even_field(), 33)
    path = tmp_path / "psi.json"
    psi.save(path)
    back = OscillatorEigenfunction.load(path)
    assert back.khat == psi.khat and back.modes == psi.modes
    doc = json.loads(path.read_text())
    doc["lambda"] = 11
    with pytest.raises(DomainError):
        OscillatorEigenfunction.from_json(doc)


def test_ball_grid_is_inside():
    g = ball_grid(2.0, 9)
    assert np.all(np.linalg.norm(g, axis=1) <= 2.0 + 1e-12)
    assert g.shape[0] > 0


def test_rescaled_error_decreases_with_khat():
    f = _even_field()
    errs = [rescaled_compare(lift(f, k), f, 2.0, grid_res=12).c1_error for k in (32, 64, 128)]
    assert errs[0] > errs[1] > errs[2]


def test_choose_khat_stops_below_half_margin():
    f = _even_field()
    psi, rep, hist = choose_khat(f, 2.0, margin=0.2, grid_res=12)
    assert rep.margin_ratio < 0.5
    assert [h["khat"] for h in hist] == [32 * 2 ** i for i in range(len(hist))]
    assert psi.khat == hist[-1]["khat"]


def test_choose_khat_caps():
    f = _even_field()
    psi, rep, hist = choose_khat(f, 2.0, margin=1e-12, max_khat=64, grid_res=8)
    assert psi.khat == 64 and len(hist) == 2
