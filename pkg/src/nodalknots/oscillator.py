"""Lifting Helmholtz fields to harmonic-oscillator eigenfunctions."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .helmholtz.fields import FourierBesselField, laplacian_fd
from .specfun import (
    DomainError,
    ModeIndex,
    _laguerre_rowwise,
    lm_index,
    log_amplitude,
    solid_harmonics,
)

__all__ = [
    "ParityError",
    "OscillatorEigenfunction",
    "LiftReport",
    "lift",
    "eval_eigenfunction",
    "eval_rescaled",
    "eigen_residual",
    "rescaled_compare",
    "enumerate_eigenspace",
    "ball_grid",
    "choose_khat",
]

log = logging.getLogger(__name__)

_CHUNK = 8192


class ParityError(ValueError):
    """Odd-degree content where only even degrees can be lifted."""


@dataclass(frozen=True)
class OscillatorEigenfunction:
    """``sum_j w_j psi_{k_j l_j m_j}`` with every mode at eigenvalue ``4*khat + 3``.

    Parameters
    ----------
    khat : int
        Radial index of the ``l = 0`` mode.
    modes : tuple of (ModeIndex, complex)
        Mode and weight pairs. Weights already include the ``1/A`` factor.
    """

    khat: int
    modes: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        modes = tuple((idx, complex(w)) for idx, w in self.modes)
        lam = self.eigenvalue
        for idx, _ in modes:
            if idx.eigenvalue != lam:
                raise DomainError(f"mode {idx} has eigenvalue {idx.eigenvalue}, expected {lam}")
        object.__setattr__(self, "modes", modes)

    @property
    def eigenvalue(self) -> int:
        return 4 * self.khat + 3

    lam = eigenvalue

    @property
    def lmax(self) -> int:
        return max((idx.l for idx, _ in self.modes), default=0)

    def _grouped(self):
        """Per-degree ``(k, l, log_scale, packed m >= 0 weights, m < 0 weights)``."""
        groups = {}
        for idx, w in self.modes:
            groups.setdefault(idx.l, []).append((idx.m, w))
        out = []
        for l in sorted(groups):
            pos = np.zeros(l + 1, dtype=complex)
            neg = np.zeros(l + 1, dtype=complex)
            for m, w in groups[l]:
                if m >= 0:
                    pos[m] += w
                else:
                    neg[-m] += w
            out.append((self.khat - l // 2, l, pos, neg))
        return out

    def evaluate(self, x):
        return eval_eigenfunction(self, x)

    __call__ = evaluate

    def to_json(self) -> dict:
        return {
            "khat": self.khat,
            "lambda": self.eigenvalue,
            "modes": [
                {"k": idx.k, "l": idx.l, "m": idx.m, "weightRe": w.real, "weightIm": w.imag}
                for idx, w in self.modes
            ],
        }

    @classmethod
    def from_json(cls, doc: dict):
        khat = int(doc["khat"])
        if "lambda" in doc and int(doc["lambda"]) != 4 * khat + 3:
            raise DomainError("lambda inconsistent with khat")
        modes = tuple(
            (ModeIndex(int(e["k"]), int(e["l"]), int(e["m"])), complex(e["weightRe"], e["weightIm"]))
            for e in doc["modes"]
        )
        return cls(khat, modes)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LiftReport:
    """Rescaled C1 comparison between a lift and its Helmholtz field."""

    c1_error: float
    c0_error: float
    grad_error: float
    grid_spec: dict
    margin_ratio: float | None = None

    def to_json(self) -> dict:
        return {
            "c1Error": self.c1_error,
            "c0Error": self.c0_error,
            "gradError": self.grad_error,
            "gridSpec": dict(self.grid_spec),
            "marginRatio": self.margin_ratio,
        }


def lift(field_: FourierBesselField, khat: int) -> OscillatorEigenfunction:
    """Lift ``sum c_lm j_l Y_lm`` to ``sum c_lm / A_{k_l l} psi_{k_l l m}``.

    ``k_l = khat - l/2`` so that every mode sits at ``4*khat + 3``.

    Raises
    ------
    ParityError
        The field has a nonzero odd-degree coefficient.
    DomainError
        ``khat <= l0/2``.
    """
    if field_.max_odd() > 0:
        raise ParityError("odd-degree coefficients cannot be lifted to a single eigenvalue")
    if khat <= field_.l0 / 2:
        raise DomainError(f"khat={khat} must exceed l0/2={field_.l0 / 2}")
    modes = []
    for (l, m), c in field_.items():
        k = khat - l // 2
        modes.append((ModeIndex(k, l, m), c * math.exp(-log_amplitude(k, l))))
    return OscillatorEigenfunction(int(khat), tuple(modes), meta={"l0": field_.l0})


def _degree_sum(sh, l, a):
    """``sum_m a[m + l] r^l Y_lm`` from packed ``m >= 0`` solid harmonics."""
    vals = sh[lm_index(l, 0):lm_index(l, l) + 1]
    out = a[l:] @ vals
    if l:
        # Y_{l,-m} = (-1)^m conj(Y_lm)
        sgn = (-1.0) ** np.arange(1, l + 1)
        out = out + (a[l - 1::-1] * sgn) @ np.conj(vals[1:])
    return out


def _ladder(l, a):
    """Coefficients of ``(d/dx + i d/dy, d/dx - i d/dy, d/dz)`` applied to a degree-``l`` sum.

    Each result is a full ``m = -(l-1)..(l-1)`` vector over degree ``l - 1``.
    """
    ms = np.arange(-l, l + 1, dtype=float)
    rho = math.sqrt((2 * l + 1) / (2 * l - 1))
    up = rho * np.sqrt((l - ms[:-2]) * (l - ms[:-2] - 1)) * a[:-2]
    down = -rho * np.sqrt((l + ms[2:]) * (l + ms[2:] - 1)) * a[2:]
    dz = rho * np.sqrt((l + ms[1:-1]) * (l - ms[1:-1])) * a[1:-1]
    return up, down, dz


def _eval_core(psi: OscillatorEigenfunction, solid_pts, s, extra_log):
    """Shared evaluator.

    ``solid_pts`` feeds the solid harmonics, ``s = |x|^2`` the radial
    factor, and ``extra_log(l)`` is added to each degree's log weight.
    Returns the value and the gradient with respect to ``solid_pts``
    except for the radial term, which the caller scales.
    """
    groups = psi._grouped()
    p = solid_pts.shape[0]
    if not groups:
        return np.zeros(p, dtype=complex), np.zeros((p, 3), dtype=complex), np.zeros((p, 3), dtype=complex)
    lmax = max(g[1] for g in groups)
    ks = np.array([g[0] for g in groups])
    ls = np.array([g[1] for g in groups])
    alphas = ls + 0.5
    base = np.array([extra_log(l) for l in ls], dtype=float)

    xs = s[None, :]
    km1 = np.maximum(ks - 1, 0)
    nr = len(ks)
    mant, lg = _laguerre_rowwise(np.concatenate([ks, km1]), np.concatenate([alphas, alphas + 1]), xs)
    m0, g0, m1, g1 = mant[:nr], lg[:nr], mant[nr:], lg[nr:]
    m1 = np.where((ks == 0)[:, None], 0.0, m1)
    logs = base[:, None] - 0.5 * s[None, :]
    f = m0 * np.exp(g0 + logs)
    df = -0.5 * f - m1 * np.exp(g1 + logs)

    sh, _ = solid_harmonics(lmax, solid_pts, gradient=False)
    value = np.zeros(p, dtype=complex)
    grad_ang = np.zeros((p, 3), dtype=complex)
    grad_rad = np.zeros((p, 3), dtype=complex)
    for row, (_, l, pos, neg) in enumerate(groups):
        a = np.concatenate([neg[:0:-1], pos])
        S = _degree_sum(sh, l, a)
        value += f[row] * S
        grad_rad += (df[row] * S)[:, None] * 2.0
        if l:
            dp, dm, dz = (_degree_sum(sh, l - 1, b) for b in _ladder(l, a))
            grad_ang[:, 0] += f[row] * 0.5 * (dp + dm)
            grad_ang[:, 1] += f[row] * -0.5j * (dp - dm)
            grad_ang[:, 2] += f[row] * dz
    return value, grad_ang, grad_rad


def _chunked(fn, pts):
    n = pts.shape[0]
    v = np.empty(n, dtype=complex)
    g = np.empty((n, 3), dtype=complex)
    for s in range(0, n, _CHUNK):
        v[s:s + _CHUNK], g[s:s + _CHUNK] = fn(pts[s:s + _CHUNK])
    return v, g


def eval_eigenfunction(psi: OscillatorEigenfunction, x):
    """Value and gradient of ``psi`` at points ``x`` (unscaled coordinates)."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    single = np.ndim(x) == 1

    def fn(chunk):
        s = np.einsum("ij,ij->i", chunk, chunk)
        v, ga, gr = _eval_core(psi, chunk, s, lambda l: 0.0)
        return v, ga + gr * chunk

    v, g = _chunked(fn, pts)
    return (v[0], g[0]) if single else (v, g)


def eval_rescaled(psi: OscillatorEigenfunction, xt):
    """``psi(xt / sqrt(lambda))`` and its gradient in the ``xt`` frame.

    The gradient carries the ``1/sqrt(lambda)`` chain factor. Solid
    harmonics are evaluated at ``xt`` with the ``lambda^(-l/2)`` factor
    folded into the log weights, which keeps high degrees in range.
    """
    pts = np.atleast_2d(np.asarray(xt, dtype=float))
    single = np.ndim(xt) == 1
    lam = float(psi.eigenvalue)
    half_log = 0.5 * math.log(lam)

    def fn(chunk):
        s = np.einsum("ij,ij->i", chunk, chunk) / lam
        v, ga, gr = _eval_core(psi, chunk, s, lambda l: -l * half_log)
        # d/dxt of f(|xt|^2/lam) = 2 f' xt / lam
        return v, ga + gr * chunk / lam

    v, g = _chunked(fn, pts)
    return (v[0], g[0]) if single else (v, g)


def eigen_residual(psi: OscillatorEigenfunction, points, h: float | None = None,
                   eps: float | None = None) -> float:
    """``max |-Δψ + |x|^2 ψ - λψ| / (|λψ| + eps)`` with a sixth-order Laplacian.

    ``h`` defaults to ``0.1/sqrt(λ)``, a tenth of the local wavelength scale;
    ``eps`` defaults to ``1e-3 * max |λψ|`` over the points so that samples
    near the nodal set do not dominate.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam = float(psi.eigenvalue)
    if h is None:
        h = 0.1 / math.sqrt(lam)
    values = eval_eigenfunction(psi, pts)[0]
    lap = laplacian_fd(lambda y: eval_eigenfunction(psi, y)[0], pts, h)
    r2 = np.einsum("ij,ij->i", pts, pts)
    res = np.abs(-lap + r2 * values - lam * values)
    scale = np.abs(lam * values)
    if eps is None:
        eps = 1e-3 * float(scale.max()) if scale.max() > 0 else 1.0
    return float(np.max(res / (scale + eps)))


def ball_grid(radius: float, res: int) -> np.ndarray:
    """Points of a uniform ``res^3`` grid on ``[-R, R]^3`` lying in the closed ball."""
    ax = np.linspace(-radius, radius, res)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    return g[np.einsum("ij,ij->i", g, g) <= radius * radius * (1 + 1e-12)]


def rescaled_compare(psi: OscillatorEigenfunction, field_, ball_radius: float,
                     grid_res: int = 48, margin: float | None = None) -> LiftReport:
    """Sup over a ball grid of ``|ψ(x/√λ) - φ(x)|`` and of the gradient mismatch.

    ``c1_error`` is the larger of the two. When ``margin`` is given the
    report also carries ``margin_ratio = c1_error / margin``.
    """
    pts = ball_grid(ball_radius, grid_res)
    pv, pg = eval_rescaled(psi, pts)
    fv, fg = field_.evaluate(pts)
    e0 = float(np.max(np.abs(pv - fv)))
    e1 = float(np.max(np.linalg.norm(pg - fg, axis=1)))
    c1 = max(e0, e1)
    ratio = None if not margin else c1 / margin
    spec = {"resolution": grid_res, "radius": ball_radius, "points": int(pts.shape[0])}
    return LiftReport(c1, e0, e1, spec, ratio)


def enumerate_eigenspace(lam: int):
    """All ``ModeIndex`` with ``4k + 2l + 3 = lam``.

    The count is ``(N+1)(N+2)/2`` for ``lam = 2N + 3``.
    """
    if int(lam) != lam or lam < 3 or lam % 2 == 0:
        raise DomainError(f"lambda must be odd and >= 3, got {lam}")
    lam = int(lam)
    out = []
    for l in range((lam - 3) % 4 // 2, (lam - 3) // 2 + 1, 2):
        k = (lam - 3 - 2 * l) // 4
        for m in range(-l, l + 1):
            out.append(ModeIndex(k, l, m))
    return out


def choose_khat(field_, ball_radius: float, margin: float, start: int | None = None,
                max_khat: int = 4096, grid_res: int = 48):
    """Double ``khat`` from ``max(32, l0)`` until the margin ratio drops below 1/2.

    Returns ``(psi, report, history)``; ``history`` lists every attempt.
    When ``max_khat`` is reached the last attempt is returned as is.
    """
    khat = start if start is not None else max(32, field_.l0)
    history = []
    while True:
        psi = lift(field_, khat)
        rep = rescaled_compare(psi, field_, ball_radius, grid_res, margin)
        history.append({"khat": khat, "c1Error": rep.c1_error, "marginRatio": rep.margin_ratio})
        log.info("khat=%d c1=%.3e ratio=%s", khat, rep.c1_error, rep.margin_ratio)
        if rep.margin_ratio is not None and rep.margin_ratio < 0.5:
            return psi, rep, history
        if 2 * khat > max_khat:
            return psi, rep, history
        khat *= 2
