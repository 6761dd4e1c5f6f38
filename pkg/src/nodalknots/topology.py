"""Link invariants of closed polylines: linking numbers, diagrams, determinants."""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .nodal import NodalCurve

__all__ = [
    "ConsistencyError",
    "DiagramError",
    "Crossing",
    "CrossingDiagram",
    "InvariantReport",
    "gauss_linking",
    "crossing_linking",
    "linking_number",
    "project_to_diagram",
    "goeritz_matrix",
    "knot_determinant",
    "coloring_matrix",
    "expected_signature",
    "classify_link",
    "is_split",
]


class ConsistencyError(RuntimeError):
    """Two independent computations of one invariant disagree."""


class DiagramError(RuntimeError):
    """No generic projection found."""


def _as_curve(c):
    return c if isinstance(c, NodalCurve) else NodalCurve.from_points(c, closed=True)


# ---------------------------------------------------------------- Gauss integral


def _segment_pair_omega(a0, a1, b0, b1):
    """Signed solid angle of every segment pair, exact for straight segments."""
    r13 = b0[None, :, :] - a0[:, None, :]
    r14 = b1[None, :, :] - a0[:, None, :]
    r23 = b0[None, :, :] - a1[:, None, :]
    r24 = b1[None, :, :] - a1[:, None, :]

    def unit(v):
        n = np.linalg.norm(v, axis=-1, keepdims=True)
        return v / np.where(n > 0, n, 1.0)

    n1 = unit(np.cross(r13, r14))
    n2 = unit(np.cross(r14, r24))
    n3 = unit(np.cross(r24, r23))
    n4 = unit(np.cross(r23, r13))

    def asin_dot(u, v):
        return np.arcsin(np.clip(np.einsum("...k,...k->...", u, v), -1.0, 1.0))

    omega = asin_dot(n1, n2) + asin_dot(n2, n3) + asin_dot(n3, n4) + asin_dot(n4, n1)
    r12 = (a1 - a0)[:, None, :]
    r34 = (b1 - b0)[None, :, :]
    sgn = np.sign(np.einsum("...k,...k->...", np.cross(r34, r12), r13))
    return omega * sgn


def gauss_linking(c1, c2) -> float:
    """Gauss linking integral of two closed polylines (real valued)."""
    a0, a1 = _as_curve(c1).segments()
    b0, b1 = _as_curve(c2).segments()
    total = 0.0
    chunk = max(1, 200000 // max(len(b0), 1))
    for s in range(0, len(a0), chunk):
        total += float(_segment_pair_omega(a0[s:s + chunk], a1[s:s + chunk], b0, b1).sum())
    return total / (4 * math.pi)


# ---------------------------------------------------------------- diagrams


@dataclass(frozen=True)
class Crossing:
    """One crossing of a projected diagram.

    ``over`` and ``under`` are ``(component, segment, parameter)`` triples.
    """

    over: tuple
    under: tuple
    sign: int
    point: tuple


@dataclass
class CrossingDiagram:
    projection_dir: np.ndarray
    crossings: list
    n_components: int
    segment_counts: list
    directions: dict = field(default_factory=dict, repr=False)

    def gauss_code(self):
        """Per component, crossings in traversal order as ``(id, 'O'|'U', sign)``."""
        events = [[] for _ in range(self.n_components)]
        for cid, c in enumerate(self.crossings):
            events[c.over[0]].append((c.over[1], c.over[2], cid + 1, "O", c.sign))
            events[c.under[0]].append((c.under[1], c.under[2], cid + 1, "U", c.sign))
        return [[(e[2], e[3], e[4]) for e in sorted(ev)] for ev in events]

    def gauss_code_text(self) -> str:
        lines = []
        for comp in self.gauss_code():
            lines.append(" ".join(f"{kind}{cid}{'+' if s > 0 else '-'}" for cid, kind, s in comp))
        return "\n".join(lines) + "\n"

    def to_json(self):
        return {
            "projectionDir": self.projection_dir.tolist(),
            "crossings": [
                {"over": list(c.over), "under": list(c.under), "sign": c.sign} for c in self.crossings
            ],
            "gaussCode": self.gauss_code_text(),
        }


def _frame(n):
    n = n / np.linalg.norm(n)
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1)
    return n, e1, np.cross(n, e1)


def _try_diagram(curves, n, sep_tol, angle_tol):
    n, e1, e2 = _frame(n)
    segs = []
    for ci, c in enumerate(curves):
        p0, p1 = c.segments()
        for si in range(len(p0)):
            segs.append((ci, si))
    P0 = np.concatenate([c.segments()[0] for c in curves])
    P1 = np.concatenate([c.segments()[1] for c in curves])
    comp = np.array([s[0] for s in segs])
    sidx = np.array([s[1] for s in segs])
    nseg = np.array([len(c.segments()[0]) for c in curves])
    A0 = np.stack([P0 @ e1, P0 @ e2], axis=1)
    A1 = np.stack([P1 @ e1, P1 @ e2], axis=1)
    D = A1 - A0
    H0, H1 = P0 @ n, P1 @ n
    lo = np.minimum(A0, A1)
    hi = np.maximum(A0, A1)
    found = []
    m = len(segs)
    for i in range(m):
        j = np.arange(i + 1, m)
        box = np.all((lo[j] <= hi[i]) & (hi[j] >= lo[i]), axis=1)
        j = j[box]
        if j.size == 0:
            continue
        same = comp[j] == comp[i]
        k = nseg[comp[i]]
        closed = curves[comp[i]].closed
        adj = same & ((sidx[j] == sidx[i] + 1) | (sidx[j] == sidx[i] - 1)
                      | (closed & (((sidx[i] == 0) & (sidx[j] == k - 1))
                                   | ((sidx[j] == 0) & (sidx[i] == k - 1)))))
        j = j[~adj]
        if j.size == 0:
            continue
        d1 = D[i]
        d2 = D[j]
        den = d1[0] * d2[:, 1] - d1[1] * d2[:, 0]
        w = A0[j] - A0[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (w[:, 0] * d2[:, 1] - w[:, 1] * d2[:, 0]) / den
            t = (w[:, 0] * d1[1] - w[:, 1] * d1[0]) / den
        hit = (den != 0) & (s >= 0) & (s < 1) & (t >= 0) & (t < 1)
        for jj, ss, tt, dd in zip(j[hit], s[hit], t[hit], den[hit]):
            sin = abs(dd) / (np.linalg.norm(d1) * np.linalg.norm(D[jj]))
            if sin < angle_tol:
                return None, "near tangency"
            edge = min(ss, 1 - ss, tt, 1 - tt)
            if edge < 1e-6:
                return None, "crossing at a vertex"
            hi_ = H0[i] + ss * (H1[i] - H0[i])
            hj = H0[jj] + tt * (H1[jj] - H0[jj])
            if abs(hi_ - hj) < sep_tol:
                return None, "strands nearly intersect"
            pt = A0[i] + ss * D[i]
            if hi_ > hj:
                over, under, to, tu = (comp[i], sidx[i], ss), (comp[jj], sidx[jj], tt), P1[i] - P0[i], P1[jj] - P0[jj]
            else:
                over, under, to, tu = (comp[jj], sidx[jj], tt), (comp[i], sidx[i], ss), P1[jj] - P0[jj], P1[i] - P0[i]
            sign = 1 if np.dot(np.cross(to, tu), n) > 0 else -1
            found.append(Crossing(tuple(map(_py, over)), tuple(map(_py, under)), sign, tuple(pt)))
    pts = np.array([c.point for c in found]).reshape(-1, 2)
    if len(pts) > 1:
        dd = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        dd[np.diag_indices(len(pts))] = np.inf
        if dd.min() < sep_tol:
            return None, "crossings too close"
    dirs = {}
    for ci, c in enumerate(curves):
        p0, p1 = c.segments()
        dirs[ci] = np.stack([(p1 - p0) @ e1, (p1 - p0) @ e2], axis=1)
    return CrossingDiagram(n, found, len(curves), list(map(int, nseg)), dirs), ""


def _py(x):
    return float(x) if isinstance(x, (float, np.floating)) else int(x)


def project_to_diagram(curves, rng_seed=0, max_attempts: int = 50, direction=None,
                       sep_tol: float | None = None, angle_tol: float = 0.02) -> CrossingDiagram:
    """Project closed curves along a random generic direction.

    Directions are drawn from ``rng_seed`` until no crossing is near a
    tangency, a vertex, a near-intersection in depth, or another crossing.

    Raises
    ------
    DiagramError
        No generic direction within ``max_attempts``.
    """
    curves = [_as_curve(c) for c in curves]
    if sep_tol is None:
        steps = np.concatenate([np.linalg.norm(np.diff(c.vertices, axis=0), axis=1) for c in curves])
        sep_tol = 0.02 * float(np.median(steps)) if len(steps) else 1e-9
    rng = np.random.default_rng(rng_seed)
    reason = ""
    for attempt in range(max_attempts):
        if direction is not None and attempt == 0:
            n = np.asarray(direction, float)
        else:
            n = rng.normal(size=3)
        diag, reason = _try_diagram(curves, n, sep_tol, angle_tol)
        if diag is not None:
            return diag
    raise DiagramError(f"no generic projection after {max_attempts} attempts ({reason}); "
                       "resample the curves more densely")


def crossing_linking(c1, c2, rng_seed=0) -> int:
    """Half the signed count of crossings between the two components."""
    diag = project_to_diagram([c1, c2], rng_seed)
    total = sum(c.sign for c in diag.crossings if c.over[0] != c.under[0])
    if total % 2:
        raise ConsistencyError("odd inter-component crossing sum")
    return total // 2


def linking_number(c1, c2, rng_seed=0, tol: float = 0.1) -> int:
    """Linking number by the Gauss integral, confirmed by a crossing count.

    Raises
    ------
    ConsistencyError
        The methods disagree or the integral is not close to an integer.
    """
    g = gauss_linking(c1, c2)
    lk = int(round(g))
    if abs(g - lk) > tol:
        raise ConsistencyError(f"Gauss integral {g:.4f} is not near an integer")
    x = crossing_linking(c1, c2, rng_seed)
    if x != lk:
        raise ConsistencyError(f"Gauss integral gives {lk}, crossings give {x}")
    return lk


# ---------------------------------------------------------------- determinants


def _strand_events(diag, comp=0):
    """Crossing visits along one component in traversal order."""
    ev = []
    for cid, c in enumerate(diag.crossings):
        if c.over[0] == comp:
            ev.append((c.over[1], c.over[2], cid, "O"))
        if c.under[0] == comp:
            ev.append((c.under[1], c.under[2], cid, "U"))
    ev.sort()
    return ev


def coloring_matrix(diag: CrossingDiagram) -> np.ndarray:
    """Fox coloring matrix of a one-component diagram.

    Arcs run between consecutive undercrossings; each crossing gives the
    row ``2*over - under_in - under_out``.
    """
    ev = _strand_events(diag)
    n = len(diag.crossings)
    if n == 0:
        return np.zeros((0, 0))
    unders = [i for i, e in enumerate(ev) if e[3] == "U"]
    # arc index of every event position
    arc_of = np.zeros(len(ev), dtype=int)
    arc = 0
    for i in range(len(ev)):
        if ev[i][3] == "U" and i != unders[0]:
            arc += 1
        arc_of[i] = arc
    # events before the first undercrossing belong to the last arc
    for i in range(unders[0]):
        arc_of[i] = arc
    n_arcs = arc + 1
    M = np.zeros((n, n_arcs))
    for i, (_, _, cid, kind) in enumerate(ev):
        if kind == "O":
            M[cid, arc_of[i]] += 2
        else:
            prev = arc_of[i - 1] if i > 0 else arc_of[-1]
            M[cid, prev] -= 1
            M[cid, arc_of[i]] -= 1
    return M


def _faces(diag: CrossingDiagram, comp=0):
    """Faces of the projected 4-valent graph of one component.

    Returns ``(corner_face, n_faces, slot_kind)`` where ``corner_face[v][s]``
    is the face whose corner at crossing ``v`` lies counterclockwise of
    slot ``s`` and ``slot_kind[v][s]`` is ``'O'`` or ``'U'``.
    """
    ev = _strand_events(diag, comp)
    n_ev = len(ev)
    dirs = diag.directions[comp]
    # four slots per crossing: (kind, in|out) with planar directions
    slots = {}
    for pos, (seg, _, cid, kind) in enumerate(ev):
        d = dirs[seg] / np.linalg.norm(dirs[seg])
        slots.setdefault(cid, []).append(((kind, "out"), d, pos))
        slots[cid].append(((kind, "in"), -d, pos))
    order, kind_of = {}, {}
    for cid, sl in slots.items():
        ang = [math.atan2(d[1], d[0]) for _, d, _ in sl]
        srt = [sl[i] for i in np.argsort(ang)]
        order[cid] = srt
        kind_of[cid] = [s[0][0] for s in srt]
    # slot index lookup: event position + in/out -> slot
    where = {}
    for cid, srt in order.items():
        for si, (key, _, pos) in enumerate(srt):
            where[(pos, key[1])] = (cid, si)
    # edges run from event pos (out) to event pos+1 (in)
    corner_face = {cid: [None] * 4 for cid in order}
    n_faces = 0
    for cid in sorted(order):
        for si in range(4):
            if corner_face[cid][si] is not None:
                continue
            # walk the face whose corner at (cid) starts at slot si
            v, s = cid, si
            while corner_face[v][s] is None:
                corner_face[v][s] = n_faces
                # leave through the next slot counterclockwise
                s_out = (s + 1) % 4
                _, _, pos = order[v][s_out]
                io = order[v][s_out][0][1]
                if io == "out":
                    nxt = ((pos + 1) % n_ev, "in")
                else:
                    nxt = ((pos - 1) % n_ev, "out")
                v, s = where[nxt]
            n_faces += 1
    return corner_face, n_faces, kind_of


def goeritz_matrix(diag: CrossingDiagram, comp=0):
    """Goeritz matrix of a one-component diagram over its white faces."""
    n = sum(1 for c in diag.crossings if c.over[0] == comp and c.under[0] == comp)
    if n == 0:
        return np.zeros((0, 0), dtype=int)
    corner_face, n_faces, kind_of = _faces(diag, comp)
    if n_faces != n + 2:
        raise DiagramError(f"face count {n_faces} != crossings + 2 = {n + 2}")
    # checkerboard colouring: faces sharing an edge have opposite colours
    adj = {f: set() for f in range(n_faces)}
    for cid, faces in corner_face.items():
        for s in range(4):
            a, b = faces[s], faces[(s + 1) % 4]
            adj[a].add(b)
            adj[b].add(a)
    colour = {0: 0}
    stack = [0]
    while stack:
        f = stack.pop()
        for g in adj[f]:
            if g not in colour:
                colour[g] = 1 - colour[f]
                stack.append(g)
            elif colour[g] == colour[f]:
                raise DiagramError("diagram faces are not two-colourable")
    white = sorted(f for f in range(n_faces) if colour[f] == 0)
    index = {f: i for i, f in enumerate(white)}
    G = np.zeros((len(white), len(white)), dtype=int)
    for cid, faces in corner_face.items():
        ws = [s for s in range(4) if colour[faces[s]] == 0]
        eta = 1 if kind_of[cid][ws[0]] == "O" else -1
        i, j = index[faces[ws[0]]], index[faces[ws[1]]]
        if i != j:
            G[i, j] -= eta
            G[j, i] -= eta
    for i in range(len(white)):
        G[i, i] = -(G[i].sum() - G[i, i])
    return G


def _int_det(M) -> int:
    if M.size == 0:
        return 1
    return int(round(abs(np.linalg.det(M.astype(float)))))


def knot_determinant(curve, rng_seed=0, diagram: CrossingDiagram | None = None) -> int:
    """``|det|`` of a reduced Goeritz matrix of a generic diagram of ``curve``."""
    diag = diagram if diagram is not None else project_to_diagram([curve], rng_seed)
    G = goeritz_matrix(diag)
    if G.shape[0] <= 1:
        return 1
    return _int_det(G[1:, 1:])


# ---------------------------------------------------------------- classification


def is_split(curves) -> bool:
    """True if some component is separated from the rest by a plane."""
    from scipy.optimize import linprog

    curves = [_as_curve(c) for c in curves]
    if len(curves) < 2:
        return False
    for i, c in enumerate(curves):
        a = c.vertices
        b = np.concatenate([d.vertices for j, d in enumerate(curves) if j != i])
        # w.x - t >= 1 on a, <= -1 on b
        A = np.concatenate([np.hstack([-a, np.ones((len(a), 1))]), np.hstack([b, -np.ones((len(b), 1))])])
        res = linprog(np.zeros(4), A_ub=A, b_ub=-np.ones(len(A)), bounds=[(None, None)] * 4,
                      method="highs")
        if res.status == 0:
            return True
    return False


def expected_signature(preset):
    """``(component count, |linking| list, determinants)`` expected for a preset."""
    from .helmholtz.seeds import parse_preset

    kind = parse_preset(preset)
    if kind[0] == "unknot":
        return 1, [], [1]
    if kind[0] == "borromean":
        return 3, [0, 0, 0], [1, 1, 1]
    _, p, q = kind
    d = math.gcd(p, q)
    pp, qq = p // d, q // d
    if pp % 2 == 0:
        det = qq
    elif qq % 2 == 0:
        det = pp
    else:
        det = 1
    return d, [pp * qq] * (d * (d - 1) // 2), [det] * d


_NAMED = {"unknot": "unknot", "hopf": "hopf", "trefoil": "trefoil", "solomon": "solomon"}


@dataclass
class InvariantReport:
    component_count: int
    linking_matrix: list
    determinants: list
    classification: str
    target: str
    matches_target: bool
    split: bool = False

    @property
    def signature(self) -> str:
        return signature_of(self.component_count, self.linking_matrix, self.determinants)

    def to_json(self):
        return {
            "componentCount": self.component_count,
            "linkingMatrix": self.linking_matrix,
            "determinants": self.determinants,
            "classification": self.classification,
            "target": self.target,
            "matchesTarget": self.matches_target,
            "split": self.split,
            "signature": self.signature,
        }


def _canonical(lk, dets):
    n = len(dets)
    best = None
    for perm in itertools.permutations(range(n)):
        key = (tuple(dets[i] for i in perm),
               tuple(lk[perm[i]][perm[j]] for i in range(n) for j in range(n)))
        if best is None or key < best:
            best = key
    return best or ((), ())


def signature_of(count, lk, dets) -> str:
    """Hash of the invariants, independent of component order."""
    d, m = _canonical(lk, dets)
    doc = json.dumps({"n": count, "det": list(d), "lk": list(m)}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def _matches(preset, count, lk, dets, split):
    n, links, want = expected_signature(preset)
    if count != n or sorted(dets) != sorted(want):
        return False
    got = sorted(abs(lk[i][j]) for i in range(count) for j in range(i + 1, count))
    if got != sorted(links):
        return False
    if preset == "borromean" and split:
        return False
    return True


def classify_link(curves, target: str, rng_seed=0) -> InvariantReport:
    """Invariants of a set of closed curves compared with ``target``."""
    from .helmholtz.seeds import parse_preset, preset_name

    curves = [_as_curve(c) for c in curves]
    n = len(curves)
    lk = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            lk[i][j] = lk[j][i] = linking_number(curves[i], curves[j], rng_seed)
    dets = [knot_determinant(c, rng_seed) for c in curves]
    split = n == 3 and all(lk[i][j] == 0 for i in range(3) for j in range(i + 1, 3)) and is_split(curves)
    classification = "unrecognized"
    for name in ("unknot", "hopf", "trefoil", "solomon", "borromean"):
        if _matches(name, n, lk, dets, split):
            classification = name if name != "borromean" else "borromean-consistent"
            break
    target_name = preset_name(parse_preset(target))
    ok = _matches(target_name, n, lk, dets, split)
    if ok and classification == "unrecognized":
        classification = f"{target_name}-consistent"
    return InvariantReport(n, lk, dets, classification, target_name, ok, split)
