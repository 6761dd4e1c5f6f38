"""Point-source machinery: Riemann-sum sources, pole sweeping and projection.

A field ``sum_j c_j G(x - z_j)`` with poles near the link is replaced by one
whose poles lie outside a ball (the sweep), and a field regular in the ball
is expanded in the Fourier-Bessel basis (the projection).
"""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy.stats import qmc

from ..specfun import DomainError, solid_harmonics, sph_bessel
from .fields import FourierBesselField, PointSourceField, eval_field, greens_eval
from .seeds import ConfigurationError

__all__ = [
    "riemann_sources",
    "mirror_pair_columns",
    "greens_sweep",
    "project_fourier_bessel",
    "sphere_quadrature",
]

log = logging.getLogger(__name__)


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = math.pi * (1 + math.sqrt(5)) * i
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def riemann_sources(density, radius: float, n: int) -> PointSourceField:
    """Riemann sum of a single-layer potential on the sphere ``|z| = radius``.

    ``density`` maps unit directions ``(p, 3)`` to complex weights. Only the
    upper hemisphere is sampled and every node is paired with its mirror, so
    the result is even whenever the density is.

    Parameters
    ----------
    density : callable
        Surface density on unit directions.
    radius : float
        Radius of the source sphere.
    n : int
        Number of mirror pairs.
    """
    if n < 1 or radius <= 0:
        raise ConfigurationError("need n >= 1 pairs on a sphere of positive radius")
    dirs = _fibonacci_sphere(2 * n)
    dirs = dirs[dirs[:, 2] > 0][:n]
    area = 4 * math.pi * radius**2 / (2 * len(dirs))
    w = np.asarray(density(dirs), dtype=complex) * area
    poles = np.concatenate([radius * dirs, -radius * dirs])
    return PointSourceField(poles, np.concatenate([w, w]), meta={"kind": "riemann", "radius": radius})


def mirror_pair_columns(points, poles) -> np.ndarray:
    """Columns ``G(x - z) + G(x + z)`` for each pole ``z``."""
    pts = np.atleast_2d(points)
    return np.stack([greens_eval(pts, z) + greens_eval(pts, -z) for z in poles], axis=1)


def _candidates(n: int, ball_radius: float, seed: int, shell: tuple) -> np.ndarray:
    """Scrambled Sobol points in the exterior shell ``shell[0]*R <= |z| <= shell[1]*R``."""
    u = qmc.Sobol(3, scramble=True, seed=seed).random(max(n, 1))
    z = 2 * u[:, 0] - 1
    phi = 2 * math.pi * u[:, 1]
    s = np.sqrt(1 - z * z)
    r = ball_radius * (shell[0] + (shell[1] - shell[0]) * u[:, 2])
    return r[:, None] * np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _fit_pairs(points, target, poles):
    A = mirror_pair_columns(points, poles)
    c, *_ = np.linalg.lstsq(A, target, rcond=1e-13)
    err = float(np.max(np.abs(A @ c - target)))
    return c, err


def greens_sweep(phi1, ball_radius: float, samples, budget: int, restarts: int = 4,
                 rng_seed: int = 0, shell: tuple = (1.1, 1.6)) -> PointSourceField:
    """Replace ``phi1`` on ``samples`` by mirror pairs of sources outside the ball.

    Candidate poles are drawn from a scrambled Sobol sequence in an exterior
    shell; ``phi1``'s own poles already outside the ball come first. For
    each restart the candidate list is a fixed sequence, so the pole sets for
    budgets ``b`` and ``2b`` are nested prefixes. Prefix lengths
    ``budget, budget/2, ...`` are all tried and the best sup error over every
    restart and prefix is kept, which makes the error non-increasing in the
    budget.

    Returns
    -------
    PointSourceField
        Poles ``z_j, -z_j`` with equal charges, no pole at the origin;
        ``meta['supError']`` is the sup error on the samples.
    """
    pts = np.atleast_2d(samples.points if hasattr(samples, "points") else samples)
    if budget < 1:
        raise ConfigurationError("sweep budget must be at least one pole pair")
    if ball_radius <= 0 or np.any(np.linalg.norm(pts, axis=1) >= ball_radius):
        raise ConfigurationError("samples must lie strictly inside the ball")
    if not shell[0] > 1 or not shell[1] >= shell[0]:
        raise ConfigurationError("candidate shell must lie outside the ball")
    target = np.asarray(eval_field(phi1, pts)[0], dtype=complex)

    own = phi1.poles[np.linalg.norm(phi1.poles, axis=1) > ball_radius]
    # one representative per mirror pair
    keep = []
    for z in own:
        if not any(np.allclose(z, -k) or np.allclose(z, k) for k in keep):
            keep.append(z)
    own = np.array(keep).reshape(-1, 3)

    best = None
    for trial in range(max(restarts, 1)):
        cand = np.concatenate([own, _candidates(budget, ball_radius, rng_seed + trial, shell)])[:budget]
        size = budget
        while size >= 1:
            c, err = _fit_pairs(pts, target, cand[:size])
            if best is None or err < best[0]:
                best = (err, cand[:size], c, trial)
            size //= 2
    err, poles, c, trial = best
    log.info("sweep budget=%d: %d pairs, sup error %.3g (restart %d)", budget, len(poles), err, trial)
    return PointSourceField(
        np.concatenate([poles, -poles]),
        np.concatenate([c, c]),
        meta={"supError": err, "pairs": int(len(poles)), "budget": budget, "restart": trial},
    )


def sphere_quadrature(n_theta: int, n_phi: int):
    """Gauss-Legendre in ``cos(theta)`` times a uniform ``phi`` rule.

    Exact for spherical polynomials of degree ``< min(2*n_theta, n_phi)``.
    Returns unit directions ``(n_theta*n_phi, 3)`` and weights summing to 4π.
    """
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    s = np.sqrt(1 - x * x)
    dirs = np.stack([
        np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi)), np.outer(x, np.ones(n_phi))
    ], axis=-1).reshape(-1, 3)
    weights = np.outer(w, np.full(n_phi, 2 * math.pi / n_phi)).reshape(-1)
    return dirs, weights


def project_fourier_bessel(field_, l0: int, ball_radius: float, n_radial: int | None = None,
                           n_theta: int | None = None, odd_tol: float = 1e-10) -> FourierBesselField:
    """Fourier-Bessel coefficients of a Helmholtz field regular in the ball.

    Angular moments ``a_lm(r) = <f(r, .), Y_lm>`` are taken on Gauss-Legendre
    shells and then projected on ``j_l`` over ``[0, R]`` with the same
    radial rule: ``c_lm = int a_lm j_l r^2 / int j_l^2 r^2``. Odd degrees are
    zeroed when all of them are below ``odd_tol`` relative to the largest
    coefficient.
    """
    poles = getattr(field_, "poles", None)
    if poles is not None and len(poles) and np.min(np.linalg.norm(poles, axis=1)) <= ball_radius:
        raise DomainError("a pole lies inside the projection ball")
    if l0 < 0 or ball_radius <= 0:
        raise DomainError("need l0 >= 0 and a positive radius")
    n_theta = n_theta or l0 + 24
    n_phi = 2 * n_theta
    n_radial = n_radial or l0 // 2 + 24
    dirs, aw = sphere_quadrature(n_theta, n_phi)
    xr, wr = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * ball_radius * (xr + 1)
    wr = 0.5 * ball_radius * wr * r * r

    pts = (r[:, None, None] * dirs[None]).reshape(-1, 3)
    vals = np.asarray(eval_field(field_, pts)[0], dtype=complex).reshape(n_radial, -1)
    ylm, _ = solid_harmonics(l0, dirs, gradient=False)
    moments = (vals * aw) @ ylm.conj().T  # (n_radial, n_lm) for m >= 0
    # a_{l,-m} = <f, Y_{l,-m}> = (-1)^m <f, conj Y_lm>
    moments_neg = (vals * aw) @ ylm.T

    coeffs = np.zeros((l0 + 1) ** 2, dtype=complex)
    for l in range(l0 + 1):
        j = np.asarray(sph_bessel(l, r)[0], dtype=float)
        norm = float(np.sum(wr * j * j))
        base = l * (l + 1) // 2
        for m in range(l + 1):
            coeffs[l * l + l + m] = np.sum(wr * j * moments[:, base + m]) / norm
            if m:
                sign = -1.0 if m % 2 else 1.0
                coeffs[l * l + l - m] = sign * np.sum(wr * j * moments_neg[:, base + m]) / norm
    out = FourierBesselField(l0, coeffs)
    scale = max(float(np.abs(coeffs).max()), 1e-300)
    odd = out.max_odd()
    if odd <= odd_tol * scale:
        for l in range(1, l0 + 1, 2):
            coeffs[l * l: (l + 1) ** 2] = 0
        out = FourierBesselField(l0, coeffs)
    out.meta.update({"maxOdd": odd, "nTheta": n_theta, "nPhi": n_phi, "nRadial": n_radial,
                     "ballRadius": ball_radius})
    return out
