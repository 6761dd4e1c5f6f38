"""Special functions for oscillator eigenfunctions and Helmholtz fields.

Everything here is vectorised over points. Angular dependence is carried by
regular solid harmonics ``r**l * Y_lm`` built from Cartesian recurrences, so
values and gradients stay smooth at the origin and on the polar axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import eval_genlaguerre, gammaln, jv, poch, spherical_jn

__all__ = [
    "DomainError",
    "ModeIndex",
    "RadialProfile",
    "AngularValue",
    "laguerre",
    "laguerre_scaled",
    "radial_profile",
    "sph_bessel",
    "bessel_reduced",
    "solid_harmonics",
    "lm_index",
    "sph_harmonic",
    "amplitude",
    "log_amplitude",
    "eval_psi_klm",
    "hilb_residual",
    "load_reference_table",
]

_RESCALE_AT = 1e100
_LOG_RESCALE = math.log(_RESCALE_AT)
# scipy's recurrence is used when |L| is provably below exp(_DIRECT_LOG_BOUND)
_DIRECT_LOG_BOUND = 600.0


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


@dataclass(frozen=True)
class ModeIndex:
    """Quantum numbers of one oscillator eigenmode."""

    k: int
    l: int
    m: int = 0
    d: int = 3

    def __post_init__(self):
        if self.k < 0 or self.l < 0:
            raise DomainError(f"k and l must be nonnegative, got k={self.k}, l={self.l}")
        if self.d < 3:
            raise DomainError(f"dimension must be >= 3, got {self.d}")
        if self.d == 3 and abs(self.m) > self.l:
            raise DomainError(f"|m| <= l required, got l={self.l}, m={self.m}")

    @property
    def eigenvalue(self) -> int:
        return 4 * self.k + 2 * self.l + self.d


@dataclass(frozen=True)
class RadialProfile:
    """Radial factor stored as ``signed_mantissa * exp(log_amplitude)``."""

    log_amplitude: np.ndarray
    signed_mantissa: np.ndarray

    def value(self) -> np.ndarray:
        return self.signed_mantissa * np.exp(self.log_amplitude)


@dataclass(frozen=True)
class AngularValue:
    """``Y_lm`` and its surface gradient in the orthonormal (e_theta, e_phi) frame."""

    value: complex
    sphere_gradient: np.ndarray


def _check_laguerre_args(k, alpha):
    if k < 0 or int(k) != k:
        raise DomainError(f"Laguerre degree must be a nonnegative integer, got {k}")
    if np.any(np.asarray(alpha) <= -1):
        raise DomainError(f"Laguerre parameter must exceed -1, got {alpha}")


def laguerre_scaled(k, alpha, x):
    """Generalised Laguerre ``L_k^alpha(x)`` as ``(mantissa, log_scale)``.

    ``k`` and ``alpha`` may be arrays of shape ``(n,)``; ``x`` has shape
    ``(p,)`` and the outputs have shape ``(n, p)`` (or ``(p,)`` for scalar
    ``k``). The upward three-term recurrence is renormalised whenever the
    running value passes 1e100, with the removed factor accumulated in
    ``log_scale``; the true value is ``mantissa * exp(log_scale)``.
    """
    scalar = np.ndim(k) == 0
    ks = np.atleast_1d(np.asarray(k, dtype=np.int64))
    alphas = np.broadcast_to(np.atleast_1d(np.asarray(alpha, dtype=float)), ks.shape)
    for kk, aa in zip(ks, alphas):
        _check_laguerre_args(int(kk), aa)
    x = np.asarray(x, dtype=float)
    shape = x.shape
    out, log_scale = _laguerre_rowwise(ks, alphas, x.reshape(1, -1))
    out = out.reshape((ks.size,) + shape)
    log_scale = log_scale.reshape((ks.size,) + shape)
    if scalar:
        return out[0], log_scale[0]
    return out, log_scale


def _laguerre_rowwise(ks, alphas, xs):
    ks = np.asarray(ks)
    a = np.asarray(alphas, dtype=float)
    if ks.size and xs.size and np.all(a >= 0) and xs.min() >= 0:
        # |L_k^a(x)| <= binom(k + a, k) exp(x/2) for a, x >= 0
        bound = gammaln(ks + a + 1) - gammaln(ks + 1) - gammaln(a + 1) + 0.5 * float(xs.max())
        if bound.max() < _DIRECT_LOG_BOUND:
            vals = eval_genlaguerre(ks[:, None].astype(np.int64), a[:, None], xs)
            return vals, np.zeros_like(vals)
    return _laguerre_recurrence(ks, a, xs)


def _laguerre_recurrence(ks, alphas, xs):
    # All rows run to the largest degree; each row's value and log scale
    # are captured when it reaches its own degree. Renormalisation is
    # checked every few steps, well before any entry can overflow.
    ks = np.asarray(ks)
    n_rows = ks.size
    a = np.asarray(alphas, dtype=float)[:, None]
    prev = np.ones((n_rows, xs.shape[1]))
    cur = 1.0 + a - xs
    log_scale = np.zeros_like(cur)
    result = np.where(ks[:, None] == 0, prev, cur)
    result_log = np.zeros_like(cur)
    kmax = int(ks.max()) if n_rows else 0
    finish = {}
    for row, k in enumerate(ks):
        if k >= 2:
            finish.setdefault(int(k), []).append(row)
    for n in range(2, kmax + 1):
        cur, prev = ((2 * n - 1 + a - xs) * cur - (n - 1 + a) * prev) / n, cur
        if n % 8 == 0:
            big = np.abs(cur) > _RESCALE_AT
            if big.any():
                cur = np.where(big, cur / _RESCALE_AT, cur)
                prev = np.where(big, prev / _RESCALE_AT, prev)
                log_scale = log_scale + big * _LOG_RESCALE
        rows = finish.get(n)
        if rows is not None:
            result[rows] = cur[rows]
            result_log[rows] = log_scale[rows]
    return result, result_log


def laguerre(k: int, alpha: float, x):
    """Generalised Laguerre polynomial ``L_k^alpha(x)`` by upward recurrence."""
    _check_laguerre_args(k, alpha)
    mant, log_scale = laguerre_scaled(k, alpha, np.asarray(x, dtype=float))
    val = mant * np.exp(log_scale)
    return float(val) if np.ndim(val) == 0 else val


def radial_profile(k: int, l: int, r) -> RadialProfile:
    """``exp(-r^2/2) r^l L_k^{l+1/2}(r^2)`` in log-magnitude + sign form."""
    if l < 0:
        raise DomainError(f"l must be nonnegative, got {l}")
    r = np.asarray(r, dtype=float)
    mant, log_scale = laguerre_scaled(k, l + 0.5, r * r)
    with np.errstate(divide="ignore"):
        log_r = np.log(r)
        log_abs = np.log(np.abs(mant))
    log_amp = log_scale + log_abs - 0.5 * r * r + (l * log_r if l else 0.0)
    sign = np.sign(mant)
    zero = (sign == 0) | ~np.isfinite(log_amp)
    log_amp = np.where(zero, 0.0, log_amp)
    sign = np.where(zero, 0.0, sign)
    return RadialProfile(log_amp, sign)


def sph_bessel(l: int, r, d: int = 3):
    """Hyperspherical Bessel function ``j_l^d`` and its derivative.

    ``j_l^d(r) = Gamma(d/2) (2/r)^(d/2-1) J_{l+d/2-1}(r)`` so that
    ``j_0^d(0) = 1``; ``d = 3`` is the classical spherical Bessel function.
    """
    if l < 0:
        raise DomainError(f"l must be nonnegative, got {l}")
    if d < 3:
        raise DomainError(f"dimension must be >= 3, got {d}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be nonnegative")
    value = _jd(l, r, d)
    nxt = _jd(l + 1, r, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        deriv = np.where(r > 0, l * value / np.where(r > 0, r, 1.0) - nxt, 0.0)
    if l == 1:
        deriv = np.where(r > 0, deriv, 1.0 / d)
    if np.ndim(value) == 0:
        return float(value), float(deriv)
    return value, deriv


def _jd(l, r, d):
    mu = d / 2 - 1
    nu = l + mu
    small = r < 1e-3
    rs = np.where(small, 1.0, r)
    if d == 3:
        big = spherical_jn(l, rs)
    else:
        big = math.gamma(d / 2) * (2 / rs) ** mu * jv(nu, rs)
    # two-term series near the origin
    lead = math.exp(gammaln(d / 2) - l * math.log(2) - gammaln(l + d / 2))
    rr = np.where(small, r, 0.0)
    series = lead * rr**l * (1 - rr * rr / (4 * (l + d / 2)))
    return np.where(small, series, big)


def bessel_reduced(l: int, r):
    """``j_l(r) / r**l``: an even entire function of ``r``, finite at 0."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = r <= 1.0
    if small.any():
        rs = r[small]
        x = -0.5 * rs * rs
        term = np.full_like(rs, math.exp(-_log_double_factorial(2 * l + 1)))
        total = term.copy()
        for n in range(1, 40):
            term = term * x / (n * (2 * l + 2 * n + 1))
            total += term
            if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
                break
        out[small] = total
    if (~small).any():
        rb = r[~small]
        out[~small] = spherical_jn(l, rb) / rb**l
    return out


def _log_double_factorial(n: int) -> float:
    # n odd: n!! = 2^((n+1)/2) Gamma(n/2 + 1) / sqrt(pi)
    return (n + 1) / 2 * math.log(2) + gammaln(n / 2 + 1) - 0.5 * math.log(math.pi)


def lm_index(l: int, m: int) -> int:
    """Position of ``(l, m >= 0)`` in the packed solid-harmonic arrays."""
    return l * (l + 1) // 2 + m


def solid_harmonics(lmax: int, points, gradient: bool = True):
    """Orthonormal regular solid harmonics ``r^l Y_lm`` for ``0 <= m <= l``.

    Returns ``values`` with shape ``(n_lm, p)`` and, if requested,
    ``grads`` with shape ``(n_lm, p, 3)``, packed by :func:`lm_index`.
    Negative orders follow from ``Y_{l,-m} = (-1)^m conj(Y_lm)``.
    Condon-Shortley phase is included.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    r2 = x * x + y * y + z * z
    p = pts.shape[0]
    n_lm = (lmax + 1) * (lmax + 2) // 2
    vals = np.zeros((n_lm, p), dtype=complex)
    grads = np.zeros((n_lm, p, 3), dtype=complex) if gradient else None
    w = x + 1j * y
    dw = np.array([1.0, 1j, 0.0])
    ez = np.array([0.0, 0.0, 1.0])

    def block(l):
        return slice(l * (l + 1) // 2, (l + 1) * (l + 2) // 2)

    vals[0] = 0.5 / math.sqrt(math.pi)
    for l in range(1, lmax + 1):
        cur, one = block(l), block(l - 1)
        v1 = vals[one]
        # sectoral: R_ll from R_{l-1,l-1}
        c = -math.sqrt((2 * l + 1) / (2 * l))
        vals[cur.stop - 1] = c * w * v1[-1]
        # R_{l,l-1} = sqrt(2l+1) z R_{l-1,l-1}
        c1 = math.sqrt(2 * l + 1)
        vals[cur.stop - 2] = c1 * z * v1[-1]
        if gradient:
            g1 = grads[one]
            grads[cur.stop - 1] = c * (dw[None, :] * v1[-1][:, None] + w[:, None] * g1[-1])
            grads[cur.stop - 2] = c1 * (ez[None, :] * v1[-1][:, None] + z[:, None] * g1[-1])
        if l >= 2:
            m = np.arange(l - 1, dtype=float)
            a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))[:, None]
            b = np.sqrt(((l - 1) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))[:, None]
            v2 = vals[block(l - 2)]
            vals[cur.start:cur.stop - 2] = a * (z * v1[: l - 1] - b * r2 * v2)
            if gradient:
                g2 = grads[block(l - 2)]
                grads[cur.start:cur.stop - 2] = a[:, :, None] * (
                    ez * v1[: l - 1][:, :, None]
                    + z[None, :, None] * g1[: l - 1]
                    - b[:, :, None] * (2 * pts[None] * v2[:, :, None] + r2[None, :, None] * g2)
                )
    return vals, grads


def expand_negative_m(lmax: int, packed, axis: int = 0):
    """Map packed ``m >= 0`` arrays to a dict keyed by every ``(l, m)``."""
    out = {}
    for l in range(lmax + 1):
        for m in range(0, l + 1):
            v = np.take(packed, lm_index(l, m), axis=axis)
            out[(l, m)] = v
            if m:
                out[(l, -m)] = _parity(m) * np.conj(v)
    return out


def sph_harmonic(l: int, m: int, theta: float, phi: float) -> AngularValue:
    """Orthonormal complex ``Y_lm(theta, phi)`` with its surface gradient."""
    if l < 0 or abs(m) > l:
        raise DomainError(f"need |m| <= l, got l={l}, m={m}")
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    n = np.array([[st * cp, st * sp, ct]])
    vals, grads = solid_harmonics(l, n)
    i = lm_index(l, abs(m))
    v, g = vals[i, 0], grads[i, 0]
    if m < 0:
        v, g = _parity(m) * np.conj(v), _parity(m) * np.conj(g)
    e_theta = np.array([ct * cp, ct * sp, -st])
    e_phi = np.array([-sp, cp, 0.0])
    return AngularValue(complex(v), np.array([g @ e_theta, g @ e_phi]))


def log_amplitude(k: int, l: int, d: int = 3) -> float:
    """Natural log of the Hilb amplitude ``A^d_kl``."""
    if k < 0 or l < 0:
        raise DomainError(f"k and l must be nonnegative, got k={k}, l={l}")
    lam = 4 * k + 2 * l + d
    return -gammaln(d / 2) - l * (0.5 * math.log(lam) - math.log(2)) + _log_gamma_ratio(k + 1, l + d / 2 - 1)


def _log_gamma_ratio(z: float, a: float) -> float:
    """``log(Gamma(z + a) / Gamma(z))`` without the cancellation of two log-gammas."""
    n = int(math.floor(a))
    frac = a - n
    out = math.log(poch(z, frac)) if frac else 0.0
    return out + float(np.sum(np.log(z + frac + np.arange(n))))


def amplitude(k: int, l: int, d: int = 3, mode: str = "exact") -> float:
    """Amplitude ``A_kl`` linking Laguerre radial factors to Bessel functions.

    ``mode="exact"`` evaluates ``(sqrt(lam)/2)^-l Gamma(k+l+d/2) / (k! Gamma(d/2))``
    in log space (for ``d = 3``, ``1/Gamma(3/2) = 2/sqrt(pi)``).
    ``mode="asymptotic"`` gives the large-``k`` form ``k^((l+1)/2) / Gamma(d/2)``
    for ``d = 3``; other dimensions use ``k^((l+d-2)/2) / Gamma(d/2)``.
    """
    if mode == "exact":
        return math.exp(log_amplitude(k, l, d))
    if mode == "asymptotic":
        if k < 1:
            raise DomainError("asymptotic amplitude needs k >= 1")
        return math.exp((l + d - 2) / 2 * math.log(k) - gammaln(d / 2))
    raise ValueError(f"unknown amplitude mode {mode!r}")


def eval_psi_klm(idx: ModeIndex, x):
    """Value and Cartesian gradient of ``psi_klm`` at points ``x``.

    ``x`` is ``(3,)`` or ``(p, 3)``. The radial factor is evaluated in
    log-scaled form, so degrees up to ~1e6 stay finite.
    """
    if idx.d != 3:
        raise DomainError("eigenfunction evaluation is implemented for d = 3")
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    f, df = _radial_weights(np.array([idx.k]), np.array([idx.l]), np.zeros(1), pts)
    vals, grads = solid_harmonics(idx.l, pts)
    i = lm_index(idx.l, abs(idx.m))
    yv, yg = vals[i], grads[i]
    if idx.m < 0:
        yv, yg = _parity(idx.m) * np.conj(yv), _parity(idx.m) * np.conj(yg)
    value = f[0] * yv
    grad = 2 * df[0][:, None] * pts * yv[:, None] + f[0][:, None] * yg
    if single:
        return complex(value[0]), grad[0]
    return value, grad


def _radial_weights(ks, ls, log_weights, pts):
    """``exp(-s/2) L_k^{l+1/2}(s) * exp(log_weight)`` and its ``s``-derivative.

    ``s = |x|^2``. Rows correspond to ``(k, l)`` pairs. The derivative uses
    ``d/ds L_k^a = -L_{k-1}^{a+1}``.
    """
    s = np.einsum("ij,ij->i", pts, pts)
    alphas = ls + 0.5
    m0, g0 = laguerre_scaled(ks, alphas, s)
    km1 = np.maximum(ks - 1, 0)
    m1, g1 = laguerre_scaled(km1, alphas + 1, s)
    m1 = np.where((ks == 0)[:, None], 0.0, m1)
    base = log_weights[:, None] - 0.5 * s[None, :]
    f = m0 * np.exp(g0 + base)
    dl = m1 * np.exp(g1 + base)
    return f, -0.5 * f - dl


def load_reference_table(path):
    """Read a ``k,l,r,radial`` CSV of high-precision radial values."""
    data = np.genfromtxt(Path(path), delimiter=",", names=True)
    return {
        (int(k), int(l)): (data["r"][(data["k"] == k) & (data["l"] == l)],
                           data["radial"][(data["k"] == k) & (data["l"] == l)])
        for k, l in {(int(a), int(b)) for a, b in zip(data["k"], data["l"])}
    }


def hilb_residual(k: int, l: int, R: float, samples: int = 2001, reference=None) -> float:
    """Relative Hilb remainder ``sup_{r<=R} |radial - A j_l(sqrt(lam) r)| / A``.

    ``reference`` may be a table from :func:`load_reference_table` (or a path
    to one); when it holds ``(k, l)`` its radii and radial values replace the
    uniform grid and the recurrence.
    """
    if k < 1:
        raise DomainError("hilb_residual needs k >= 1")
    if R <= 0:
        raise DomainError("R must be positive")
    lam = 4 * k + 2 * l + 3
    log_a = log_amplitude(k, l)
    if reference is not None:
        if not isinstance(reference, dict):
            reference = load_reference_table(reference)
        r, radial = reference[(k, l)]
        scaled = np.asarray(radial, dtype=float) / math.exp(log_a)
    else:
        r = np.linspace(0.0, R, samples)
        prof = radial_profile(k, l, r)
        scaled = prof.signed_mantissa * np.exp(prof.log_amplitude - log_a)
    bessel = spherical_jn(l, math.sqrt(lam) * np.asarray(r, dtype=float))
    return float(np.max(np.abs(scaled - bessel)))


def _parity(n: int) -> float:
    return -1.0 if n % 2 else 1.0
