"""Milnor-type polynomial seed fields with a prescribed nodal link.

A seed is a complex polynomial ``P`` in local coordinates
``y = (x - centre) / scale`` whose zero set in R^3 is the target link, with
``rank(grad Re P, grad Im P) = 2`` along it. Torus links come from the
Milnor map ``u^p - v^q`` pulled back through inverse stereographic
projection, ``u = |y|^2 - 1 + 2i y3``, ``v = 2 (y1 + i y2)``, homogenised
by powers of ``1 + |y|^2``. The Borromean preset is the product of three
complex functions, each cutting out one of three perpendicular ellipses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

__all__ = [
    "ConfigurationError",
    "Placement",
    "SeedField",
    "PRESETS",
    "parse_preset",
    "preset_polynomial",
    "preset_curves",
    "milnor_seed",
    "default_placement",
    "preset_name",
    "default_scale",
    "DEFAULT_SCALE",
]

PRESETS = ("unknot", "hopf", "trefoil", "solomon", "borromean")

# Borromean ellipse semi-axes (long, short)
_BORRO_A, _BORRO_B = 1.0, 0.5


class ConfigurationError(ValueError):
    """Invalid link preset or placement."""


def parse_preset(preset) -> tuple:
    """Normalise a preset name to ``("torus", p, q)``, ``("unknot",)`` or ``("borromean",)``."""
    if isinstance(preset, (tuple, list)):
        if len(preset) == 3 and preset[0] == "torus":
            p, q = int(preset[1]), int(preset[2])
        else:
            raise ConfigurationError(f"unknown preset {preset!r}")
    else:
        name = str(preset).strip().lower()
        if name == "unknot":
            return ("unknot",)
        if name == "borromean":
            return ("borromean",)
        aliases = {"hopf": (2, 2), "trefoil": (2, 3), "solomon": (2, 4)}
        if name in aliases:
            p, q = aliases[name]
        elif name.startswith("torus(") and name.endswith(")"):
            try:
                p, q = (int(t) for t in name[6:-1].split(","))
            except ValueError as exc:
                raise ConfigurationError(f"bad torus preset {preset!r}") from exc
        else:
            raise ConfigurationError(f"unknown preset {preset!r}")
    if p < 1 or q < 1:
        raise ConfigurationError("torus link exponents must be positive")
    return ("torus", p, q)


def preset_name(kind: tuple) -> str:
    if kind[0] != "torus":
        return kind[0]
    named = {(2, 2): "hopf", (2, 3): "trefoil", (2, 4): "solomon"}
    return named.get(kind[1:], f"torus({kind[1]},{kind[2]})")


def _uv(y):
    s = np.einsum("ij,ij->i", y, y)
    u = s - 1 + 2j * y[:, 2]
    v = 2 * (y[:, 0] + 1j * y[:, 1])
    du = np.stack([2 * y[:, 0], 2 * y[:, 1], 2 * y[:, 2] + 2j], axis=1)
    dv = np.broadcast_to(np.array([2.0, 2.0j, 0.0]), y.shape)
    return s, u, v, du, dv


def _torus_poly(y, p, q):
    s, u, v, du, dv = _uv(y)
    w = 1 + s
    dw = 2 * y
    e = q - p
    if e >= 0:
        a, da = u**p * w**e, (p * u ** (p - 1))[:, None] * du * (w**e)[:, None]
        if e:
            da = da + (u**p * e * w ** (e - 1))[:, None] * dw
        b, db = v**q, (q * v ** (q - 1))[:, None] * dv
    else:
        a, da = u**p, (p * u ** (p - 1))[:, None] * du
        b = v**q * w ** (-e)
        db = (q * v ** (q - 1) * w ** (-e))[:, None] * dv + (v**q * (-e) * w ** (-e - 1))[:, None] * dw
    return a - b, da - db


def _ellipse_factor(y, i, j, k):
    # zero set: y_i^2/A^2 + y_j^2/B^2 = 1, y_k = 0
    val = y[:, i] ** 2 / _BORRO_A**2 + y[:, j] ** 2 / _BORRO_B**2 - 1 + 1j * y[:, k]
    grad = np.zeros(y.shape, dtype=complex)
    grad[:, i] = 2 * y[:, i] / _BORRO_A**2
    grad[:, j] = 2 * y[:, j] / _BORRO_B**2
    grad[:, k] = 1j
    return val, grad


def preset_polynomial(kind: tuple, y):
    """Seed polynomial and its gradient in local coordinates ``y`` ``(p, 3)``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if kind[0] == "unknot":
        _s, u, _v, du, _dv = _uv(y)
        return u, du.copy()
    if kind[0] == "torus":
        return _torus_poly(y, kind[1], kind[2])
    if kind[0] == "borromean":
        factors = [_ellipse_factor(y, 0, 1, 2), _ellipse_factor(y, 1, 2, 0), _ellipse_factor(y, 2, 0, 1)]
        val = factors[0][0] * factors[1][0] * factors[2][0]
        grad = (
            (factors[1][0] * factors[2][0])[:, None] * factors[0][1]
            + (factors[0][0] * factors[2][0])[:, None] * factors[1][1]
            + (factors[0][0] * factors[1][0])[:, None] * factors[2][1]
        )
        return val, grad
    raise ConfigurationError(f"unknown preset {kind!r}")


def _from_sphere(u, v):
    # inverse of u = (|y|^2-1+2i y3)/(|y|^2+1), v = 2(y1+i y2)/(|y|^2+1)
    den = 1 - u.real
    return np.stack([v.real / den, v.imag / den, u.imag / den], axis=1)


def preset_curves(kind: tuple, n: int = 400):
    """Closed polylines (local coordinates) of each link component."""
    if kind[0] == "unknot":
        t = np.linspace(0, 2 * math.pi, n, endpoint=False)
        return [np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1)]
    if kind[0] == "borromean":
        t = np.linspace(0, 2 * math.pi, n, endpoint=False)
        a, b = _BORRO_A * np.cos(t), _BORRO_B * np.sin(t)
        z = np.zeros_like(t)
        return [
            np.stack([a, b, z], axis=1),
            np.stack([z, a, b], axis=1),
            np.stack([b, z, a], axis=1),
        ]
    _, p, q = kind
    # |u| = a, |v| = b with a^p = b^q, a^2 + b^2 = 1
    bmod = brentq(lambda b: (1 - b * b) ** (p / 2) - b**q, 1e-12, 1 - 1e-12)
    amod = math.sqrt(1 - bmod * bmod)
    g = math.gcd(p, q)
    t = np.linspace(0, 2 * math.pi / g, n, endpoint=False)
    curves = []
    for j in range(g):
        u = amod * np.exp(1j * q * t)
        v = bmod * np.exp(1j * (p * t + 2 * math.pi * j / q))
        curves.append(_from_sphere(u, v))
    return curves


@dataclass(frozen=True)
class Placement:
    """Maps local seed coordinates to space: ``x = centre + scale * y``."""

    scale: float
    centre: tuple

    def to_space(self, y):
        return np.asarray(self.centre, dtype=float) + self.scale * np.asarray(y, dtype=float)

    def to_local(self, x):
        return (np.asarray(x, dtype=float) - np.asarray(self.centre, dtype=float)) / self.scale


def _bump(t):
    # smooth step: 1 for t <= 0, 0 for t >= 1
    t = np.clip(t, 0.0, 1.0)
    a = np.where(t < 1, np.exp(-1 / np.maximum(1 - t, 1e-300)), 0.0)
    b = np.where(t > 0, np.exp(-1 / np.maximum(t, 1e-300)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class SeedField:
    """Windowed seed polynomial around a placed link.

    ``tube_radius`` is the radius of the sampling tube; the window equals 1
    within ``2 * tube_radius`` of the link and vanishes beyond
    ``4 * tube_radius``.
    """

    kind: tuple
    placement: Placement
    tube_radius: float
    curves: list = field(compare=False)
    _tree: object = field(default=None, compare=False, repr=False)
    normalized: bool = True

    @property
    def name(self) -> str:
        return preset_name(self.kind)

    def polynomial(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        val, grad = preset_polynomial(self.kind, self.placement.to_local(pts))
        return val, grad / self.placement.scale

    def gauge(self, x):
        """Positive factor ``sqrt(2) / |J P|_F`` that evens out the gradient along the link.

        ``J P`` is the real 2x3 Jacobian of ``(Re P, Im P)``; for a conformal
        gradient the gauged seed has transversality margin exactly 1.
        """
        _, grad = self.polynomial(x)
        fro = np.sqrt(np.sum(np.abs(grad) ** 2, axis=1))
        return math.sqrt(2.0) / fro

    def gauged(self, x):
        """``P * gauge`` and its gradient (gauge gradient by central differences)."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        val, grad = self.polynomial(pts)
        if not self.normalized:
            return val, grad
        a = self.gauge(pts)
        h = 1e-5 * self.placement.scale
        da = np.empty(pts.shape)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            da[:, k] = (self.gauge(pts + e) - self.gauge(pts - e)) / (2 * h)
        return val * a, grad * a[:, None] + val[:, None] * da

    def link_jet(self, n_per_component: int = 100):
        """Points on the link with the gauged seed gradient there (value is 0)."""
        pts, grads = [], []
        for c in self.curves:
            idx = np.linspace(0, len(c), n_per_component, endpoint=False).astype(int)
            p = c[idx]
            _, g = self.polynomial(p)
            if self.normalized:
                g = g * self.gauge(p)[:, None]
            pts.append(p)
            grads.append(g)
        return np.concatenate(pts), np.concatenate(grads)

    def window(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        dist, idx = self._tree.query(pts)
        allpts = np.concatenate(self.curves)
        t = (dist - 2 * self.tube_radius) / (2 * self.tube_radius)
        w = _bump(t)
        # derivative of the smooth step by central difference in t
        dt = 1e-6
        dw = (_bump(t + dt) - _bump(t - dt)) / (2 * dt) / (2 * self.tube_radius)
        with np.errstate(invalid="ignore", divide="ignore"):
            direction = (pts - allpts[idx]) / np.where(dist > 0, dist, 1.0)[:, None]
        return w, dw[:, None] * direction

    def evaluate(self, x):
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        val, grad = self.gauged(pts)
        w, dw = self.window(pts)
        v = val * w
        g = grad * w[:, None] + val[:, None] * dw
        if single:
            return v[0], g[0]
        return v, g

    __call__ = evaluate

    def mirrored(self, x):
        """Symmetrised target ``seed(x) + seed(-x)`` (the two windows are disjoint)."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        v1, g1 = self.evaluate(pts)
        v2, g2 = self.evaluate(-pts)
        return v1 + v2, g1 - g2

    def bounding_box(self, pad: float = 0.0):
        allpts = np.concatenate(self.curves)
        return allpts.min(axis=0) - pad, allpts.max(axis=0) + pad


def milnor_seed(preset, placement: Placement | None = None, tube_radius: float | None = None,
                ball_radius: float | None = None, margin: float | None = None,
                n_curve: int = 400, normalized: bool = True) -> SeedField:
    """Build a seed field for ``preset`` placed in the positive octant.

    ``placement`` defaults to a unit-scale link centred so that its
    bounding box clears the coordinate planes. The placed link plus a
    window of ``4 * tube_radius`` must stay inside the positive octant
    (and inside ``ball_radius`` when given); violations raise
    :class:`ConfigurationError`.
    """
    kind = parse_preset(preset)
    local = preset_curves(kind, n_curve)
    if placement is None:
        placement = default_placement(kind)
    if placement.scale <= 0:
        raise ConfigurationError("placement scale must be positive")
    curves = [placement.to_space(c) for c in local]
    allpts = np.concatenate(curves)
    if tube_radius is None:
        tube_radius = 0.25 * _min_separation(curves, allpts) if len(curves) > 1 else 0.1 * placement.scale
        tube_radius = min(tube_radius, 0.1 * placement.scale)
    if margin is None:
        margin = 4 * tube_radius
    low = allpts.min(axis=0)
    if np.any(low <= margin):
        raise ConfigurationError(
            f"link must clear the coordinate planes by {margin:.3g}; lowest coordinates {low}"
        )
    if ball_radius is not None:
        far = np.linalg.norm(allpts, axis=1).max() + margin
        if far >= ball_radius:
            raise ConfigurationError(f"link reaches radius {far:.3g} >= ball radius {ball_radius}")
    return SeedField(kind, placement, float(tube_radius), curves, cKDTree(allpts), normalized)


def _min_separation(curves, allpts):
    best = math.inf
    for i, c in enumerate(curves):
        others = np.concatenate([d for j, d in enumerate(curves) if j != i])
        dist, _ = cKDTree(others).query(c)
        best = min(best, float(dist.min()))
    return best


# Default scales: the link must span a few wavelengths of the Helmholtz
# field for a moderate-degree fit to hold its 1-jet.
DEFAULT_SCALE = {"unknot": 2.0, "hopf": 3.0, "trefoil": 5.0, "solomon": 5.0, "borromean": 5.0}


def default_scale(kind: tuple) -> float:
    return DEFAULT_SCALE.get(preset_name(kind), 5.0)


def default_placement(kind: tuple, scale: float | None = None,
                      clearance: float | None = None) -> Placement:
    """Centre the link so its bounding box sits ``clearance`` above each coordinate plane.

    ``scale`` defaults per preset and ``clearance`` to ``0.6 * scale``.
    """
    if scale is None:
        scale = default_scale(kind)
    if clearance is None:
        clearance = 0.6 * scale
    local = np.concatenate(preset_curves(kind, 400))
    low = local.min(axis=0) * scale
    centre = clearance - low
    return Placement(scale, tuple(float(c) for c in centre))
