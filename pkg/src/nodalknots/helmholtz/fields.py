"""Helmholtz field representations: Fourier-Bessel sums and point sources."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..specfun import bessel_reduced, lm_index, solid_harmonics

__all__ = [
    "SingularityError",
    "FourierBesselField",
    "PointSourceField",
    "greens_eval",
    "greens_with_gradient",
    "fourier_bessel_basis",
    "basis_labels",
    "eval_field",
    "field_distance",
    "laplacian_fd",
]

_CHUNK = 4096


class SingularityError(ValueError):
    """Evaluation requested at a pole of a point-source field."""


def basis_labels(l0: int, even: bool = True):
    """``(l, m)`` labels of the Fourier-Bessel basis up to degree ``l0``."""
    ls = range(0, l0 + 1, 2) if even else range(l0 + 1)
    return [(l, m) for l in ls for m in range(-l, l + 1)]


def _flat(l: int, m: int) -> int:
    return l * l + l + m


def _as_points(x):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


def fourier_bessel_basis(l0: int, points, even: bool = True, gradient: bool = True):
    """Columns ``j_l(r) Y_lm`` (and gradients) evaluated at ``points``.

    Returns ``(values, grads, labels)`` with shapes ``(p, nb)`` and
    ``(p, nb, 3)``. Uses ``j_l(r) Y_lm = (j_l(r)/r^l) * r^l Y_lm`` and
    ``d/dr (j_l/r^l) = -r * j_{l+1}/r^{l+1}``, both regular at the origin.
    """
    pts, _ = _as_points(points)
    labels = basis_labels(l0, even)
    r = np.linalg.norm(pts, axis=1)
    red = {l: bessel_reduced(l, r) for l in range(l0 + 2)}
    sh, shg = solid_harmonics(l0, pts, gradient=gradient)
    vals = np.empty((pts.shape[0], len(labels)), dtype=complex)
    grads = np.empty((pts.shape[0], len(labels), 3), dtype=complex) if gradient else None
    for col, (l, m) in enumerate(labels):
        i = lm_index(l, abs(m))
        yv = sh[i]
        yg = shg[i] if gradient else None
        if m < 0:
            sgn = -1.0 if m % 2 else 1.0
            yv = sgn * np.conj(yv)
            if gradient:
                yg = sgn * np.conj(yg)
        vals[:, col] = red[l] * yv
        if gradient:
            grads[:, col, :] = -red[l + 1][:, None] * pts * yv[:, None] + red[l][:, None] * yg
    return vals, grads, labels


@dataclass(frozen=True)
class FourierBesselField:
    """Finite sum ``sum c_lm j_l(r) Y_lm`` solving ``Δφ + φ = 0``.

    ``coeffs`` is a dense complex vector indexed by ``l*l + l + m``.
    """

    l0: int
    coeffs: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != ((self.l0 + 1) ** 2,):
            raise ValueError(f"expected {(self.l0 + 1) ** 2} coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_dict(cls, l0: int, entries: dict):
        c = np.zeros((l0 + 1) ** 2, dtype=complex)
        for (l, m), v in entries.items():
            if l > l0 or abs(m) > l:
                raise ValueError(f"bad mode ({l}, {m}) for l0={l0}")
            c[_flat(l, m)] = v
        return cls(l0, c)

    @classmethod
    def from_labels(cls, l0: int, labels, values):
        return cls.from_dict(l0, dict(zip(labels, values)))

    def coefficient(self, l: int, m: int) -> complex:
        if l > self.l0 or abs(m) > l:
            return 0j
        return complex(self.coeffs[_flat(l, m)])

    def items(self):
        for l in range(self.l0 + 1):
            for m in range(-l, l + 1):
                c = self.coeffs[_flat(l, m)]
                if c != 0:
                    yield (l, m), complex(c)

    @property
    def is_even(self) -> bool:
        return not any(l % 2 for (l, _), _c in self.items())

    def max_odd(self) -> float:
        odd = [abs(c) for (l, _), c in self.items() if l % 2]
        return max(odd, default=0.0)

    def _blocks(self):
        """Per degree: ``(l, weights for m >= 0, signed weights for m < 0)``."""
        cached = self.__dict__.get("_block_cache")
        if cached is not None:
            return cached
        blocks = []
        for l in range(self.l0 + 1):
            c = self.coeffs[l * l:(l + 1) * (l + 1)]
            if not np.any(c):
                continue
            pos = c[l:].copy()
            sgn = np.array([(-1.0) ** m for m in range(l + 1)])
            neg = np.concatenate([[0.0], c[:l][::-1]]) * sgn
            blocks.append((l, pos, neg))
        object.__setattr__(self, "_block_cache", blocks)
        return blocks

    def evaluate(self, x):
        pts, single = _as_points(x)
        blocks = self._blocks()
        v_out = np.zeros(pts.shape[0], dtype=complex)
        g_out = np.zeros(pts.shape, dtype=complex)
        if blocks:
            lmax = blocks[-1][0]
            for s in range(0, pts.shape[0], _CHUNK):
                chunk = pts[s:s + _CHUNK]
                r = np.linalg.norm(chunk, axis=1)
                sh, shg = solid_harmonics(lmax, chunk, gradient=True)
                for l, pos, neg in blocks:
                    blk = slice(l * (l + 1) // 2, (l + 1) * (l + 2) // 2)
                    # Y_{l,-m} = (-1)^m conj(Y_lm)
                    S = pos @ sh[blk] + neg @ np.conj(sh[blk])
                    dS = np.einsum("m,mpk->pk", pos, shg[blk]) + np.einsum("m,mpk->pk", neg, np.conj(shg[blk]))
                    red, red1 = bessel_reduced(l, r), bessel_reduced(l + 1, r)
                    v_out[s:s + _CHUNK] += red * S
                    g_out[s:s + _CHUNK] += red[:, None] * dS - (red1 * S)[:, None] * chunk
        if single:
            return v_out[0], g_out[0]
        return v_out, g_out

    __call__ = evaluate

    def to_json(self) -> dict:
        return {
            "l0": self.l0,
            "entries": [
                {"l": l, "m": m, "re": c.real, "im": c.imag} for (l, m), c in self.items()
            ],
        }

    @classmethod
    def from_json(cls, doc: dict):
        l0 = int(doc["l0"])
        entries = {(int(e["l"]), int(e["m"])): complex(e["re"], e["im"]) for e in doc["entries"]}
        return cls.from_dict(l0, entries)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def greens_with_gradient(x, source=None):
    """``G(x - source) = cos|d| / (4π|d|)`` and its gradient in ``x``."""
    pts, single = _as_points(x)
    src = np.zeros(3) if source is None else np.asarray(source, dtype=float)
    d = pts - src
    r = np.linalg.norm(d, axis=1)
    if np.any(r == 0):
        raise SingularityError("Green's function evaluated at its pole")
    c, s = np.cos(r), np.sin(r)
    g = c / (4 * math.pi * r)
    dg = (-s / r - c / (r * r)) / (4 * math.pi)
    grad = (dg / r)[:, None] * d
    if single:
        return float(g[0]), grad[0]
    return g, grad


def greens_eval(x, source=None):
    """Green's function of ``Δ + 1`` centred at ``source``."""
    return greens_with_gradient(x, source)[0]


@dataclass(frozen=True)
class PointSourceField:
    """``sum_j c_j G(x - z_j)``."""

    poles: np.ndarray
    charges: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        poles = np.atleast_2d(np.asarray(self.poles, dtype=float)).reshape(-1, 3)
        charges = np.atleast_1d(np.asarray(self.charges, dtype=complex))
        if poles.shape[0] != charges.shape[0]:
            raise ValueError("poles and charges differ in length")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "charges", charges)

    def evaluate(self, x):
        pts, single = _as_points(x)
        v = np.zeros(pts.shape[0], dtype=complex)
        g = np.zeros(pts.shape, dtype=complex)
        for z, c in zip(self.poles, self.charges):
            gv, gg = greens_with_gradient(pts, z)
            v += c * gv
            g += c * gg
        if single:
            return v[0], g[0]
        return v, g

    __call__ = evaluate

    def is_mirror_symmetric(self) -> bool:
        """True if the sources come in pairs ``(z, c), (-z, c)``."""
        used = np.zeros(len(self.poles), dtype=bool)
        for i, (z, c) in enumerate(zip(self.poles, self.charges)):
            if used[i]:
                continue
            match = [
                j for j in range(len(self.poles))
                if not used[j] and j != i
                and np.array_equal(self.poles[j], -z) and self.charges[j] == c
            ]
            if not match:
                return False
            used[i] = used[match[0]] = True
        return True


def eval_field(field, x):
    """Value and gradient of any field object at ``x``."""
    if hasattr(field, "evaluate"):
        return field.evaluate(x)
    return field(x)


def field_distance(f, g, samples, order: int = 0) -> float:
    """Sup distance on sample points; ``order=1`` includes gradients."""
    pts = samples.points if hasattr(samples, "points") else np.asarray(samples, dtype=float)
    fv, fg = eval_field(f, pts)
    gv, gg = eval_field(g, pts)
    d0 = float(np.max(np.abs(fv - gv)))
    if order == 0:
        return d0
    if order != 1:
        raise ValueError("order must be 0 or 1")
    d1 = float(np.max(np.linalg.norm(fg - gg, axis=-1)))
    return max(d0, d1)


_FD6 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])


def laplacian_fd(func, x, h: float):
    """Sixth-order central-difference Laplacian of a scalar field at ``x``.

    ``func`` maps ``(p, 3)`` points to ``p`` values.
    """
    pts, single = _as_points(x)
    offsets = np.arange(-3, 4) * h
    total = np.zeros(pts.shape[0], dtype=complex)
    for axis in range(3):
        stencil = np.repeat(pts[None, :, :], 7, axis=0)
        stencil[:, :, axis] += offsets[:, None]
        vals = np.asarray(func(stencil.reshape(-1, 3))).reshape(7, -1)
        total += _FD6 @ vals / (h * h)
    return total[0] if single else total
