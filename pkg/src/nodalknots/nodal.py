"""Nodal-line extraction for complex fields in R^3."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .specfun import DomainError

__all__ = [
    "Box",
    "Ball",
    "RegionUnion",
    "NodalCurve",
    "TransversalityReport",
    "StabilityReport",
    "ExtractionResult",
    "extract_nodal_curves",
    "transversality_margin",
    "smallest_singular",
    "perturb_and_retrace",
    "random_eigenspace_perturbation",
    "near_reference",
    "curves_to_vtk",
    "curves_to_obj",
    "curves_to_csv",
    "curves_to_json",
    "curves_from_json",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- regions


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= np.asarray(self.lo)) & (pts <= np.asarray(self.hi)), axis=1)

    @property
    def bounds(self):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    def mirrored(self):
        return Box(tuple(-np.asarray(self.hi)), tuple(-np.asarray(self.lo)))

    def to_json(self):
        return {"type": "box", "lo": list(map(float, self.lo)), "hi": list(map(float, self.hi))}


@dataclass(frozen=True)
class Ball:
    centre: tuple
    radius: float

    def contains(self, pts):
        d = np.atleast_2d(pts) - np.asarray(self.centre)
        return np.einsum("ij,ij->i", d, d) <= self.radius ** 2

    @property
    def bounds(self):
        c = np.asarray(self.centre, float)
        return c - self.radius, c + self.radius

    def to_json(self):
        return {"type": "ball", "centre": list(map(float, self.centre)), "radius": float(self.radius)}


@dataclass(frozen=True)
class RegionUnion:
    parts: tuple

    def contains(self, pts):
        out = np.zeros(np.atleast_2d(pts).shape[0], dtype=bool)
        for p in self.parts:
            out |= p.contains(pts)
        return out

    @property
    def bounds(self):
        los, his = zip(*(p.bounds for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)

    def to_json(self):
        return {"type": "union", "parts": [p.to_json() for p in self.parts]}


def region_from_json(doc):
    kind = doc["type"]
    if kind == "box":
        return Box(tuple(doc["lo"]), tuple(doc["hi"]))
    if kind == "ball":
        return Ball(tuple(doc["centre"]), float(doc["radius"]))
    if kind == "union":
        return RegionUnion(tuple(region_from_json(p) for p in doc["parts"]))
    raise ValueError(f"unknown region type {kind!r}")


def _parts(region):
    return region.parts if isinstance(region, RegionUnion) else (region,)


# ---------------------------------------------------------------- records


@dataclass
class NodalCurve:
    """Oriented polyline on the zero set, tangent along ``∇Re × ∇Im``.

    Closed curves do not repeat their first vertex.
    """

    vertices: np.ndarray
    closed: bool
    margins: np.ndarray
    step: float
    flag: str = ""

    @property
    def min_margin(self) -> float:
        return float(self.margins.min()) if len(self.margins) else 0.0

    @property
    def arc_length(self) -> float:
        v = self.vertices
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1).sum()
        if self.closed and len(v) > 1:
            seg += np.linalg.norm(v[0] - v[-1])
        return float(seg)

    def segments(self):
        v = self.vertices
        return (v, np.roll(v, -1, axis=0)) if self.closed else (v[:-1], v[1:])

    def reversed(self):
        return NodalCurve(self.vertices[::-1].copy(), self.closed, self.margins[::-1].copy(),
                          self.step, self.flag)

    def centroid(self):
        return self.vertices.mean(axis=0)

    def to_json(self):
        return {
            "closed": self.closed,
            "minMargin": self.min_margin,
            "arcLength": self.arc_length,
            "step": self.step,
            "flag": self.flag,
            "vertices": self.vertices.tolist(),
            "margins": self.margins.tolist(),
        }

    @classmethod
    def from_json(cls, doc):
        return cls(np.asarray(doc["vertices"], float), bool(doc["closed"]),
                   np.asarray(doc.get("margins", []), float), float(doc.get("step", 0.0)),
                   doc.get("flag", ""))

    @classmethod
    def from_points(cls, pts, closed=True):
        """Wrap a sampled curve (no field attached) for topology routines."""
        pts = np.asarray(pts, float)
        step = float(np.median(np.linalg.norm(np.diff(pts, axis=0), axis=1))) if len(pts) > 1 else 0.0
        return cls(pts, closed, np.ones(len(pts)), step)


@dataclass(frozen=True)
class TransversalityReport:
    per_vertex: np.ndarray
    min: float

    def to_json(self):
        return {"min": self.min, "perVertexMargin": self.per_vertex.tolist()}


@dataclass
class ExtractionResult:
    curves: list
    step: float
    value_tol: float
    degeneracy_tol: float
    discarded_seeds: int = 0
    flagged: int = 0

    @property
    def closed(self):
        return [c for c in self.curves if c.closed and not c.flag]

    @property
    def open(self):
        return [c for c in self.curves if not c.closed or c.flag]

    def summary(self):
        closed = self.closed
        return {
            "curves": len(self.curves),
            "closed": len(closed),
            "open": len(self.curves) - len(closed),
            "step": self.step,
            "valueTol": self.value_tol,
            "degeneracyTol": self.degeneracy_tol,
            "discardedSeeds": self.discarded_seeds,
            "flagged": self.flagged,
            "minMargin": min((c.min_margin for c in closed), default=0.0),
            "arcLengths": [c.arc_length for c in closed],
        }


@dataclass
class StabilityReport:
    trials: int
    epsilon: float
    epsilon_rel: float
    margin: float
    preserved: int
    signatures: list = field(default_factory=list)
    reference: str = ""

    def to_json(self):
        return {
            "trials": self.trials,
            "epsilon": self.epsilon,
            "epsilonRel": self.epsilon_rel,
            "margin": self.margin,
            "preserved": self.preserved,
            "reference": self.reference,
            "signatures": list(self.signatures),
        }


# ---------------------------------------------------------------- numerics


def smallest_singular(grad):
    """Smallest singular value of the 2x3 matrices ``[Re g; Im g]``."""
    a, b = grad.real, grad.imag
    aa = np.einsum("...i,...i->...", a, a)
    bb = np.einsum("...i,...i->...", b, b)
    ab = np.einsum("...i,...i->...", a, b)
    tr = aa + bb
    det = np.maximum(aa * bb - ab * ab, 0.0)
    disc = np.sqrt(np.maximum(tr * tr - 4 * det, 0.0))
    # (tr - disc)/2 loses accuracy; use det / larger eigenvalue
    big = 0.5 * (tr + disc)
    small = np.where(big > 0, det / np.where(big > 0, big, 1.0), 0.0)
    return np.sqrt(small)


def _tangent(grad):
    t = np.cross(grad.real, grad.imag)
    n = np.linalg.norm(t, axis=-1, keepdims=True)
    return t / np.where(n > 0, n, 1.0)


def _newton_step(v, g):
    """Least-norm update solving ``Re = Im = 0`` to first order."""
    J = np.stack([g.real, g.imag], axis=1)  # (p, 2, 3)
    F = np.stack([v.real, v.imag], axis=1)
    JJ = np.einsum("pik,pjk->pij", J, J)
    det = JJ[:, 0, 0] * JJ[:, 1, 1] - JJ[:, 0, 1] ** 2
    det = np.where(np.abs(det) > 0, det, np.inf)
    inv = np.stack([
        np.stack([JJ[:, 1, 1], -JJ[:, 0, 1]], axis=1),
        np.stack([-JJ[:, 1, 0], JJ[:, 0, 0]], axis=1),
    ], axis=1) / det[:, None, None]
    y = np.einsum("pij,pj->pi", inv, F)
    return -np.einsum("pik,pi->pk", J, y)


def _project(fn, pts, value_tol, iters=12, max_move=None):
    """Newton-project points onto the zero set; returns (pts, v, g, ok)."""
    pts = np.array(pts, dtype=float)
    v, g = fn(pts)
    ok = np.abs(v) < value_tol
    start = pts.copy()
    for _ in range(iters):
        todo = ~ok
        if not todo.any():
            break
        d = _newton_step(v[todo], g[todo])
        pts[todo] = pts[todo] + d
        v[todo], g[todo] = fn(pts[todo])
        ok = np.abs(v) < value_tol
    if max_move is not None:
        ok &= np.linalg.norm(pts - start, axis=1) <= max_move
    return pts, v, g, ok & np.all(np.isfinite(pts), axis=1)


def _as_evaluator(field_):
    if hasattr(field_, "evaluate"):
        f = field_.evaluate
    else:
        f = field_

    def fn(pts):
        pts = np.atleast_2d(pts)
        if pts.shape[0] == 0:
            return np.zeros(0, complex), np.zeros((0, 3), complex)
        v, g = f(pts)
        return np.asarray(v, complex).reshape(-1), np.asarray(g, complex).reshape(-1, 3)

    return fn


def _grid(region, grid_res):
    lo, hi = region.bounds
    axes = [np.linspace(lo[i], hi[i], grid_res + 1) for i in range(3)]
    return axes


def _grid_stats(fn, region, grid_res):
    """Grid values, seeds (cell centres with sign changes), sup and median gradient."""
    seeds = []
    sups, gnorms = [], []
    for part in _parts(region):
        axes = _grid(part, grid_res)
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        shape = X.shape[:3]
        v, g = fn(X.reshape(-1, 3))
        sups.append(np.abs(v).max())
        gnorms.append(np.linalg.norm(g, axis=1))
        v = v.reshape(shape)
        re, im = np.where(v.real >= 0, 1, -1), np.where(v.imag >= 0, 1, -1)

        def changes(s):
            c = [s[i:i + shape[0] - 1, j:j + shape[1] - 1, k:k + shape[2] - 1]
                 for i in (0, 1) for j in (0, 1) for k in (0, 1)]
            c = np.stack(c)
            return (c.max(axis=0) >= 0) & (c.min(axis=0) < 0)

        cells = changes(re) & changes(im)
        idx = np.argwhere(cells)
        h = np.array([axes[i][1] - axes[i][0] for i in range(3)])
        lo = np.array([axes[i][0] for i in range(3)])
        seeds.append(lo + (idx + 0.5) * h)
    seeds = np.concatenate(seeds) if seeds else np.zeros((0, 3))
    seeds = seeds[region.contains(seeds)] if len(seeds) else seeds
    return seeds, float(max(sups)), float(np.median(np.concatenate(gnorms)))


class _Hash:
    """Spatial hash of curve vertices at resolution ``h``."""

    def __init__(self, h):
        self.h = h
        self.cells = {}

    def _keys(self, pts):
        return [tuple(k) for k in np.floor(pts / self.h).astype(np.int64)]

    def add(self, pts, label):
        for key, p in zip(self._keys(pts), pts):
            self.cells.setdefault(key, []).append((p, label))

    def near(self, pts, radius):
        """Label of a stored vertex within ``radius`` of each point, or -1."""
        out = np.full(len(pts), -1)
        reach = int(math.ceil(radius / self.h))
        offsets = [(a, b, c) for a in range(-reach, reach + 1)
                   for b in range(-reach, reach + 1) for c in range(-reach, reach + 1)]
        for i, (key, p) in enumerate(zip(self._keys(pts), pts)):
            for o in offsets:
                for q, lab in self.cells.get((key[0] + o[0], key[1] + o[1], key[2] + o[2]), ()):
                    if np.linalg.norm(q - p) <= radius:
                        out[i] = lab
                        break
                if out[i] >= 0:
                    break
        return out


def _trace(fn, region, starts, directions, h, value_tol, deg_tol, max_steps, partner=None):
    """Trace from every start in parallel along ``direction * tangent``.

    ``partner[i]`` names a tracer that becomes redundant once ``i`` closes.

    Returns per-tracer vertex lists, margins and end status
    (``closed``, ``boundary``, ``degenerate``, ``stalled`` or ``maxsteps``).
    """
    n = len(starts)
    pos = np.array(starts, dtype=float)
    v, g = fn(pos)
    t0 = _tangent(g) * directions[:, None]
    verts = [[p.copy()] for p in pos]
    margins = [[m] for m in smallest_singular(g)]
    status = np.array([""] * n, dtype=object)
    hs = np.full(n, h)
    prev_t = t0.copy()
    active = np.ones(n, dtype=bool)
    steps = np.zeros(n, dtype=int)
    while active.any():
        ids = np.nonzero(active)[0]
        p = pos[ids]
        tcur = _tangent(g[ids]) * directions[ids, None]
        # Euler predictor, Newton corrector
        q = p + hs[ids, None] * tcur
        q, vq, gqq, ok = _project(fn, q, value_tol, iters=8, max_move=0.5 * hs[ids].max())
        tn = _tangent(gqq) * directions[ids, None]
        seg = np.linalg.norm(q - p, axis=1)
        ok &= np.einsum("ij,ij->i", tn, tcur) > 0.5
        ok &= (seg >= 0.25 * h) & (seg <= 2 * h)
        for j, i in enumerate(ids):
            if not ok[j]:
                if hs[i] > 0.3 * h:
                    hs[i] *= 0.5
                else:
                    status[i] = "stalled"
                    active[i] = False
                continue
            hs[i] = h
            if not region.contains(q[j][None])[0]:
                status[i] = "boundary"
                active[i] = False
                continue
            m = smallest_singular(gqq[j])
            if m < deg_tol:
                status[i] = "degenerate"
                active[i] = False
                continue
            steps[i] += 1
            start = verts[i][0]
            if steps[i] >= 4 and np.dot(t0[i], tn[j]) > 0:
                a, b = pos[i], q[j]
                ab = b - a
                s = np.clip(np.dot(start - a, ab) / max(np.dot(ab, ab), 1e-300), 0.0, 1.0)
                if np.linalg.norm(a + s * ab - start) < 0.5 * h:
                    if s < 1.0:
                        # b overshoots the start: close from a, never backtrack
                        if np.linalg.norm(a - start) < 0.25 * h and len(verts[i]) > 4:
                            verts[i].pop()
                            margins[i].pop()
                    elif np.linalg.norm(b - start) >= 0.25 * h:
                        verts[i].append(q[j].copy())
                        margins[i].append(m)
                    status[i] = "closed"
                    active[i] = False
                    if partner is not None and active[partner[i]]:
                        active[partner[i]] = False
                        status[partner[i]] = "redundant"
                    continue
            verts[i].append(q[j].copy())
            margins[i].append(m)
            pos[i] = q[j]
            g[i] = gqq[j]
            prev_t[i] = tn[j]
            if steps[i] >= max_steps:
                status[i] = "maxsteps"
                active[i] = False
    return verts, margins, status


def extract_nodal_curves(field_, region, grid_res: int = 32, step: float | None = None,
                         value_tol: float | None = None, degeneracy_tol: float | None = None,
                         max_steps: int | None = None) -> ExtractionResult:
    """Trace the curves ``Re f = Im f = 0`` inside ``region``.

    Seeds come from grid cells where both real and imaginary parts change
    sign. Each seed is Newton-projected with the least-norm update and
    traced along ``∇Re × ∇Im`` by a predictor-corrector scheme. Curves that
    leave the region are also traced backwards and returned open.

    Parameters
    ----------
    field_ : callable or object with ``evaluate``
        Maps ``(p, 3)`` points to complex values ``(p,)`` and gradients ``(p, 3)``.
    region : Box, Ball or RegionUnion
    grid_res : int
        Seeding cells per axis (at least 16).
    step : float, optional
        Tracing step; defaults to the region diameter over ``4 * grid_res``.
    value_tol, degeneracy_tol : float, optional
        Default to ``1e-8`` times the grid sup of ``|f|`` and ``1e-6`` times
        the median grid gradient norm.
    """
    if grid_res < 16:
        raise ValueError("grid_res must be at least 16")
    fn = _as_evaluator(field_)
    lo, hi = region.bounds
    parts = _parts(region)
    diam = max(float(np.linalg.norm(p.bounds[1] - p.bounds[0])) for p in parts)
    h = step if step is not None else diam / (4 * grid_res)
    seeds, sup, gmed = _grid_stats(fn, region, grid_res)
    vtol = value_tol if value_tol is not None else 1e-8 * sup
    dtol = degeneracy_tol if degeneracy_tol is not None else 1e-6 * gmed
    if max_steps is None:
        max_steps = int(200 * diam / h)

    cell = float(np.max((hi - lo) / grid_res))
    pts, v, g, ok = _project(fn, seeds, vtol, iters=20, max_move=2 * cell)
    ok &= region.contains(pts) if len(pts) else ok
    ok &= smallest_singular(g) > dtol if len(pts) else ok
    discarded = int((~ok).sum())
    if discarded:
        log.info("discarded %d seeds that did not converge", discarded)
    pts = pts[ok]

    curves = []
    hashed = _Hash(h)
    remaining = pts
    rounds = 0
    while len(remaining) and rounds < 50:
        rounds += 1
        # greedy pick of well separated starts for this round
        chosen = []
        for p in remaining:
            if all(np.linalg.norm(p - c) > 8 * h for c in chosen):
                chosen.append(p)
            if len(chosen) >= 64:
                break
        chosen = np.array(chosen)
        nc = len(chosen)
        both = np.concatenate([chosen, chosen])
        dirs = np.concatenate([np.ones(nc), -np.ones(nc)])
        partner = np.concatenate([np.arange(nc, 2 * nc), np.arange(nc)])
        verts, margs, st = _trace(fn, region, both, dirs, h, vtol, dtol, max_steps, partner)
        fwd, fm, fst = verts[:nc], margs[:nc], st[:nc]
        bwd, bm, bst = verts[nc:], margs[nc:], st[nc:]
        new = []
        for i in range(nc):
            if fst[i] == "closed":
                new.append(NodalCurve(np.array(fwd[i]), True, np.array(fm[i]), h))
                continue
            k = i
            if bst[k] == "closed":
                c = NodalCurve(np.array(bwd[k]), True, np.array(bm[k]), h).reversed()
                new.append(c)
                continue
            vb = np.array(bwd[k][1:][::-1]).reshape(-1, 3)
            mb = np.array(bm[k][1:][::-1])
            verts = np.concatenate([vb, np.array(fwd[i])])
            margs = np.concatenate([mb, np.array(fm[i])])
            bad = {fst[i], bst[k]} - {"boundary"}
            flag = ",".join(sorted(bad)) if bad else ""
            new.append(NodalCurve(verts, False, margs, h, flag))
        for c in new:
            hit = hashed.near(c.vertices, h)
            if np.mean(hit >= 0) > 0.5:
                continue
            curves.append(c)
            hashed.add(c.vertices, len(curves) - 1)
        covered = hashed.near(remaining, 2 * h)
        remaining = remaining[covered < 0]
    flagged = sum(1 for c in curves if c.flag)
    curves = _canonical_order(curves)
    return ExtractionResult(curves, h, vtol, dtol, discarded, flagged)


def _canonical_order(curves):
    """Deterministic order: closed first, then by centroid; closed curves start at their
    lexicographically smallest vertex."""
    out = []
    for c in curves:
        if c.closed:
            i = int(np.lexsort(c.vertices.T[::-1])[0])
            c = NodalCurve(np.roll(c.vertices, -i, axis=0), True, np.roll(c.margins, -i), c.step, c.flag)
        out.append(c)
    out.sort(key=lambda c: (not c.closed, tuple(np.round(c.centroid(), 6))))
    return out


def transversality_margin(field_, curve: NodalCurve) -> TransversalityReport:
    """Per-vertex smallest singular value of ``[∇Re f; ∇Im f]``."""
    fn = _as_evaluator(field_)
    _, g = fn(curve.vertices)
    m = smallest_singular(g)
    return TransversalityReport(m, float(m.min()) if len(m) else 0.0)


# ---------------------------------------------------------------- stability


def random_eigenspace_perturbation(lam: int, rng, lmax: int | None = None):
    """Random same-eigenvalue combination of ``psi_klm / A_kl``.

    Degrees above ``lmax`` are skipped (their rescaled contribution on a
    bounded region is below double-precision resolution).
    """
    from .oscillator import OscillatorEigenfunction, enumerate_eigenspace
    from .specfun import log_amplitude

    khat = (lam - 3) // 4
    modes = []
    for idx in enumerate_eigenspace(lam):
        if lmax is not None and idx.l > lmax:
            continue
        w = complex(rng.normal(), rng.normal()) * math.exp(-log_amplitude(idx.k, idx.l))
        modes.append((idx, w))
    return OscillatorEigenfunction(khat, tuple(modes))


def useful_degree(radius: float, floor: float = 1e-16) -> int:
    """Largest even ``l`` with ``radius^l / (2l+1)!!`` above ``floor``."""
    l, best = 0, 0
    while True:
        val = l * math.log(max(radius, 1e-300)) - sum(math.log(2 * j + 1) for j in range(l + 1))
        if val < math.log(floor) and l > radius:
            return best
        if l % 2 == 0:
            best = l
        l += 1


def perturb_and_retrace(psi, epsilon_rel: float, trials: int, seed: int, region,
                        classify, margin: float, grid_res: int = 32, c1_grid=None,
                        lmax: int | None = None, extract_kwargs=None) -> StabilityReport:
    """Add same-eigenspace perturbations of C1 size ``epsilon_rel * margin`` and retrace.

    Parameters
    ----------
    psi : OscillatorEigenfunction
    epsilon_rel : float
        Perturbation size relative to ``margin``; zero is the control run.
    classify : callable
        Maps an ``ExtractionResult`` to a signature string.
    region : region used by the reference extraction (rescaled coordinates).
    c1_grid : array, optional
        Points where the C1 norm of a perturbation is measured; defaults to a
        grid over the region.
    """
    from .oscillator import OscillatorEigenfunction, eval_rescaled

    if epsilon_rel < 0 or trials <= 0:
        raise DomainError("epsilon_rel must be >= 0 and trials > 0")
    kw = dict(extract_kwargs or {})
    base_fn = lambda x: eval_rescaled(psi, x)
    ref = classify(extract_nodal_curves(base_fn, region, grid_res, **kw))
    if c1_grid is None:
        pts = []
        for part in _parts(region):
            lo, hi = part.bounds
            ax = [np.linspace(lo[i], hi[i], 17) for i in range(3)]
            pts.append(np.stack(np.meshgrid(*ax, indexing="ij"), -1).reshape(-1, 3))
        c1_grid = np.concatenate(pts)
    if lmax is None:
        reach = float(np.max(np.linalg.norm(c1_grid, axis=1)))
        lmax = useful_degree(reach)
    rng = np.random.default_rng(seed)
    eps = epsilon_rel * margin
    sigs, preserved = [], 0
    for _ in range(trials):
        if epsilon_rel == 0:
            sig = ref
        else:
            pert = random_eigenspace_perturbation(psi.eigenvalue, rng, lmax)
            pv, pg = eval_rescaled(pert, c1_grid)
            norm = max(float(np.abs(pv).max()), float(np.linalg.norm(pg, axis=1).max()))
            scale = eps / norm
            combined = OscillatorEigenfunction(
                psi.khat,
                tuple(psi.modes) + tuple((idx, w * scale) for idx, w in pert.modes),
            )
            fn = lambda x, c=combined: eval_rescaled(c, x)
            sig = classify(extract_nodal_curves(fn, region, grid_res, **kw))
        sigs.append(sig)
        preserved += sig == ref
    return StabilityReport(trials, eps, epsilon_rel, margin, preserved, sigs, ref)


def near_reference(curves, reference, radius: float):
    """Split closed curves into those lying within ``radius`` of ``reference`` and the rest.

    ``reference`` is a list of polylines (for instance the seed link and its
    mirror). A curve counts as near only if every vertex is within
    ``radius``; the remaining curves are nodal components elsewhere in the
    region, which the containment statement allows.
    """
    from scipy.spatial import cKDTree

    tree = cKDTree(np.concatenate([np.asarray(r, dtype=float) for r in reference]))
    near, far = [], []
    for c in curves:
        d, _ = tree.query(c.vertices)
        (near if float(d.max()) <= radius else far).append(c)
    return near, far


# ---------------------------------------------------------------- export


def curves_to_obj(curves) -> str:
    lines, base = [], 1
    for c in curves:
        n = len(c.vertices)
        lines += [f"v {x:.10g} {y:.10g} {z:.10g}" for x, y, z in c.vertices]
        idx = list(range(base, base + n)) + ([base] if c.closed else [])
        lines.append("l " + " ".join(map(str, idx)))
        base += n
    return "\n".join(lines) + "\n"


def curves_to_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["curveId", "x", "y", "z", "margin"])
    for i, c in enumerate(curves):
        for p, m in zip(c.vertices, c.margins):
            w.writerow([i, f"{p[0]:.10g}", f"{p[1]:.10g}", f"{p[2]:.10g}", f"{m:.6g}"])
    return buf.getvalue()


def curves_to_vtk(curves) -> str:
    """Legacy ASCII VTK polydata with one polyline per curve and a margin field."""
    pts = [p for c in curves for p in c.vertices]
    margins = [m for c in curves for m in c.margins]
    lines, base = [], 0
    for c in curves:
        n = len(c.vertices)
        idx = list(range(base, base + n)) + ([base] if c.closed else [])
        lines.append(f"{len(idx)} " + " ".join(map(str, idx)))
        base += n
    size = sum(len(l.split()) for l in lines)
    out = ["# vtk DataFile Version 3.0", "nodal curves", "ASCII", "DATASET POLYDATA",
           f"POINTS {len(pts)} double"]
    out += [f"{x:.10g} {y:.10g} {z:.10g}" for x, y, z in pts]
    out.append(f"LINES {len(lines)} {size}")
    out += lines
    out += [f"POINT_DATA {len(pts)}", "SCALARS margin double 1", "LOOKUP_TABLE default"]
    out += [f"{m:.6g}" for m in margins]
    return "\n".join(out) + "\n"


def curves_to_json(curves) -> str:
    return json.dumps({"curves": [c.to_json() for c in curves]})


def curves_from_json(text: str):
    return [NodalCurve.from_json(d) for d in json.loads(text)["curves"]]
