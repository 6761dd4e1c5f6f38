"""Least-squares synthesis of even Fourier-Bessel fields from seed targets."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import FourierBesselField, fourier_bessel_basis

__all__ = ["SampleSet", "link_samples", "fit_coefficients", "auto_fit", "AutoFit", "jet_margin"]

log = logging.getLogger(__name__)

_CSV_COLUMNS = ["x", "y", "z", "reV", "imV", "reGx", "imGx", "reGy", "imGy", "reGz", "imGz", "weight"]


@dataclass
class SampleSet:
    """Fitting targets: points with complex values, gradients and weights."""

    points: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        n = self.points.shape[0]
        self.values = np.asarray(self.values, dtype=complex).reshape(n)
        self.gradients = np.asarray(self.gradients, dtype=complex).reshape(n, 3)
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("sample weights must be nonnegative")
        self.weights = w.reshape(n)

    def __len__(self):
        return self.points.shape[0]

    def symmetrized(self) -> "SampleSet":
        """Append the mirror samples ``(-x, T(x), -∇T(x))`` of an even target."""
        return SampleSet(
            np.concatenate([self.points, -self.points]),
            np.concatenate([self.values, self.values]),
            np.concatenate([self.gradients, -self.gradients]),
            np.concatenate([self.weights, self.weights]),
        )

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        """Every sample has a mirror partner with equal value and opposite gradient."""
        from scipy.spatial import cKDTree

        dist, idx = cKDTree(self.points).query(-self.points)
        if np.any(dist > tol * max(1.0, np.abs(self.points).max())):
            return False
        scale = max(1.0, np.abs(self.values).max(), np.abs(self.gradients).max())
        return bool(
            np.all(np.abs(self.values[idx] - self.values) <= tol * scale)
            and np.all(np.abs(self.gradients[idx] + self.gradients) <= tol * scale)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_CSV_COLUMNS)
        for p, v, g, wt in zip(self.points, self.values, self.gradients, self.weights):
            row = [*p, v.real, v.imag]
            for k in range(3):
                row += [g[k].real, g[k].imag]
            w.writerow([repr(float(x)) for x in row] + [repr(float(wt))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SampleSet":
        rows = list(csv.DictReader(io.StringIO(text)))
        missing = set(_CSV_COLUMNS) - set(rows[0] if rows else _CSV_COLUMNS)
        if missing:
            raise ValueError(f"sample CSV lacks columns {sorted(missing)}")
        f = lambda r, k: float(r[k])
        pts = [[f(r, "x"), f(r, "y"), f(r, "z")] for r in rows]
        vals = [complex(f(r, "reV"), f(r, "imV")) for r in rows]
        grads = [[complex(f(r, f"reG{a}"), f(r, f"imG{a}")) for a in "xyz"] for r in rows]
        wts = [f(r, "weight") for r in rows]
        return cls(np.array(pts).reshape(-1, 3), np.array(vals), np.array(grads).reshape(-1, 3), np.array(wts))

    def save(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path):
        return cls.from_csv(Path(path).read_text())


def jet_margin(gradients) -> np.ndarray:
    """Smallest singular value of ``[Re g; Im g]`` per sample."""
    from ..nodal import smallest_singular

    return smallest_singular(np.asarray(gradients, dtype=complex))


def link_samples(seed, n_per_component: int = 100, symmetric: bool = True) -> SampleSet:
    """Samples of the windowed, mirrored seed target on the link itself.

    On the link the target value is zero and its gradient is the gauged seed
    gradient, so these samples carry exactly the 1-jet that fixes the
    nodal set and its transversality.
    """
    pts, grads = seed.link_jet(n_per_component)
    s = SampleSet(pts, np.zeros(len(pts), dtype=complex), grads)
    return s.symmetrized() if symmetric else s


def _design(l0, samples, length):
    B, BG, labels = fourier_bessel_basis(l0, samples.points, even=True)
    w = samples.weights
    A = np.concatenate([
        (w / length)[:, None] * B,
        (w[:, None, None] * BG).transpose(0, 2, 1).reshape(-1, B.shape[1]),
    ])
    rhs = np.concatenate([w / length * samples.values, (w[:, None] * samples.gradients).reshape(-1)])
    return A, rhs, labels


def _residuals(field_, samples):
    v, g = field_.evaluate(samples.points)
    c0 = float(np.max(np.abs(v - samples.values)))
    c1 = max(c0, float(np.max(np.linalg.norm(g - samples.gradients, axis=1))))
    return c0, c1


class _Solver:
    """SVD of the column-normalised design matrix, reusable across Tikhonov levels."""

    def __init__(self, l0, samples, length):
        self.l0 = l0
        A, self.rhs, self.labels = _design(l0, samples, length)
        self.norms = np.linalg.norm(A, axis=0)
        self.norms[self.norms == 0] = 1.0
        self.U, self.s, self.Vh = np.linalg.svd(A / self.norms, full_matrices=False)
        self.proj = self.U.conj().T @ self.rhs

    def solve(self, rel_tau):
        tau = rel_tau * self.s[0]
        f = self.s / (self.s**2 + tau**2)
        c = (self.Vh.conj().T * f) @ self.proj / self.norms
        rank = int(np.sum(self.s > tau))
        return c, rank


def fit_coefficients(seed, l0: int, samples: SampleSet | None = None,
                     regularization: float = 1e-8, length: float | None = None) -> FourierBesselField:
    """Even field ``sum c_lm j_l Y_lm`` (``l`` even) matching the samples in value and gradient.

    Solved through a singular value decomposition of the column-normalised
    design matrix with Tikhonov parameter ``regularization * s_max``. Value
    rows are divided by ``length`` (default: the seed tube radius) so that
    both kinds of mismatch carry gradient units. Residuals, rank and
    conditioning are reported in ``meta``; a rank-deficient system logs a
    warning instead of failing.
    """
    if samples is None:
        samples = link_samples(seed)
    if length is None:
        length = float(getattr(seed, "tube_radius", 1.0))
    solver = _Solver(l0, samples, length)
    c, rank = solver.solve(regularization)
    field_ = FourierBesselField.from_labels(l0, solver.labels, c)
    c0, c1 = _residuals(field_, samples)
    cond = float(solver.s[0] / solver.s[-1]) if solver.s[-1] > 0 else float("inf")
    meta = {
        "l0": l0,
        "regularization": regularization,
        "rank": rank,
        "columns": len(solver.labels),
        "condition": cond,
        "c0Residual": c0,
        "c1Residual": c1,
        "samples": len(samples),
    }
    if rank < len(solver.labels):
        meta["warning"] = f"rank {rank} < {len(solver.labels)} columns at the requested regularization"
        log.warning("fit at l0=%d: %s", l0, meta["warning"])
    field_.meta.update(meta)
    return field_


@dataclass
class AutoFit:
    field: FourierBesselField
    l0: int
    regularization: float
    seed_margin: float
    delta: float
    accepted: bool
    history: list = field(default_factory=list)


def auto_fit(seed, samples: SampleSet | None = None, l0_ladder=None, reg_ladder=None,
             length: float | None = None) -> AutoFit:
    """Largest regularization, then smallest ``l0``, whose C1 residual is below half the margin.

    The residual budget ``delta`` is half the transversality margin of the
    target jet. Heavier regularization keeps coefficients small, which keeps
    the oscillator lift close to the field, so it is tried first.
    """
    if samples is None:
        samples = link_samples(seed)
    if length is None:
        length = float(getattr(seed, "tube_radius", 1.0))
    l0_ladder = list(l0_ladder or range(8, 41, 4))
    reg_ladder = sorted(reg_ladder or [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8], reverse=True)
    margin = float(jet_margin(samples.gradients).min())
    delta = 0.5 * margin
    history = []
    best = None
    solvers = {}
    for reg in reg_ladder:
        for l0 in l0_ladder:
            if l0 not in solvers:
                solvers[l0] = _Solver(l0, samples, length)
            solver = solvers[l0]
            c, rank = solver.solve(reg)
            f = FourierBesselField.from_labels(l0, solver.labels, c)
            c0, c1 = _residuals(f, samples)
            history.append({"l0": l0, "regularization": reg, "c1Residual": c1, "rank": rank})
            if best is None or c1 < best[0]:
                best = (c1, f, l0, reg, c0, rank)
            if c1 < delta:
                f.meta.update({"l0": l0, "regularization": reg, "c0Residual": c0, "c1Residual": c1,
                               "rank": rank, "samples": len(samples)})
                log.info("auto fit: l0=%d reg=%.0e c1=%.3g delta=%.3g", l0, reg, c1, delta)
                return AutoFit(f, l0, reg, margin, delta, True, history)
    c1, f, l0, reg, c0, rank = best
    f.meta.update({"l0": l0, "regularization": reg, "c0Residual": c0, "c1Residual": c1,
                   "rank": rank, "samples": len(samples)})
    log.warning("auto fit: no (l0, reg) met delta=%.3g; best c1=%.3g", delta, c1)
    return AutoFit(f, l0, reg, margin, delta, False, history)
