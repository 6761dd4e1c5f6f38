"""Pipeline orchestration and the ``nodalknots`` command line.

Exit codes: 0 pass, 1 verdict fail, 2 configuration error, 3 numerical
stage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .helmholtz import (
    ConfigurationError,
    FourierBesselField,
    Placement,
    auto_fit,
    default_placement,
    jet_margin,
    link_samples,
    milnor_seed,
    parse_preset,
    preset_name,
)
from .nodal import (
    Box,
    ExtractionResult,
    NodalCurve,
    RegionUnion,
    curves_from_json,
    curves_to_csv,
    curves_to_json,
    curves_to_obj,
    curves_to_vtk,
    extract_nodal_curves,
    near_reference,
    perturb_and_retrace,
    smallest_singular,
)
from .oscillator import OscillatorEigenfunction, choose_khat, eval_rescaled, lift, rescaled_compare
from .topology import DiagramError, classify_link, signature_of

__all__ = [
    "PipelineConfig",
    "PipelineReport",
    "StageError",
    "Context",
    "run_pipeline",
    "main",
    "EXIT_PASS",
    "EXIT_FAIL",
    "EXIT_CONFIG",
    "EXIT_NUMERIC",
]

log = logging.getLogger("nodalknots")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_DEFAULT_GRID = {"extract": 32, "compare": 48}
_DEFAULT_TOL = {
    "marginRatio": 0.5,
    "regularization": "auto",
    "boxPad": 0.25,
    "linkRadius": 2.0,
    "maxKhat": 4096,
}
_DEFAULT_STABILITY = {"trials": 20, "epsilonRel": 0.1}
_FORMATS = ("json", "csv", "obj", "vtk")


class StageError(RuntimeError):
    """A numerical stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


# ---------------------------------------------------------------- config


@dataclass
class PipelineConfig:
    """Validated pipeline settings.

    ``l0`` and ``khat`` are integers or ``"auto"``. ``placement`` may set
    ``scale``, ``clearance`` or an explicit ``centre``. ``tolerances``
    overrides entries of the defaults: ``marginRatio`` (lift gate),
    ``regularization`` (``"auto"`` or a relative Tikhonov level),
    ``boxPad`` (extraction box padding in units of the link scale),
    ``linkRadius`` (tube radii within which a nodal curve counts as a link
    component) and ``maxKhat``.
    """

    preset: str = "hopf"
    placement: dict = field(default_factory=dict)
    l0: object = "auto"
    khat: object = "auto"
    grid: dict = field(default_factory=lambda: dict(_DEFAULT_GRID))
    tolerances: dict = field(default_factory=lambda: dict(_DEFAULT_TOL))
    stability: dict = field(default_factory=lambda: dict(_DEFAULT_STABILITY))
    rngSeed: int = 0
    outputs: dict = field(default_factory=lambda: {"formats": ["json"]})
    threads: object = None

    def __post_init__(self):
        self.grid = {**_DEFAULT_GRID, **(self.grid or {})}
        self.tolerances = {**_DEFAULT_TOL, **(self.tolerances or {})}
        self.stability = {**_DEFAULT_STABILITY, **(self.stability or {})}
        self.outputs = {"formats": ["json"], **(self.outputs or {})}
        self.validate()

    def validate(self):
        try:
            parse_preset(self.preset)
        except Exception as exc:
            raise ConfigurationError(f"unknown preset {self.preset!r}") from exc
        for key in self.placement:
            if key not in ("scale", "clearance", "centre"):
                raise ConfigurationError(f"unknown placement key {key!r}")
        if self.l0 != "auto":
            if not _is_int(self.l0) or self.l0 < 2 or self.l0 % 2:
                raise ConfigurationError(f"l0 must be 'auto' or an even integer >= 2, got {self.l0!r}")
        if self.khat != "auto":
            if not _is_int(self.khat) or self.khat < 1:
                raise ConfigurationError(f"khat must be 'auto' or a positive integer, got {self.khat!r}")
            if _is_int(self.l0) and 2 * self.khat < self.l0:
                raise ConfigurationError("khat must be at least l0/2 so every lifted mode has k >= 0")
        for key in self.grid:
            if key not in _DEFAULT_GRID:
                raise ConfigurationError(f"unknown grid key {key!r}")
        if not _is_int(self.grid["extract"]) or self.grid["extract"] < 16:
            raise ConfigurationError("grid.extract must be an integer >= 16")
        if not _is_int(self.grid["compare"]) or self.grid["compare"] < 8:
            raise ConfigurationError("grid.compare must be an integer >= 8")
        for key in self.tolerances:
            if key not in _DEFAULT_TOL:
                raise ConfigurationError(f"unknown tolerance {key!r}")
        reg = self.tolerances["regularization"]
        if reg != "auto" and not (isinstance(reg, (int, float)) and reg > 0):
            raise ConfigurationError("tolerances.regularization must be 'auto' or positive")
        trials, eps = self.stability["trials"], self.stability["epsilonRel"]
        if not _is_int(trials) or trials < 0:
            raise ConfigurationError("stability.trials must be a nonnegative integer")
        if not isinstance(eps, (int, float)) or eps < 0:
            raise ConfigurationError("stability.epsilonRel must be >= 0")
        if not _is_int(self.rngSeed) or self.rngSeed < 0:
            raise ConfigurationError("rngSeed must be a nonnegative integer")
        for fmt in self.outputs.get("formats", []):
            if fmt not in _FORMATS:
                raise ConfigurationError(f"unknown output format {fmt!r}")
        if self.threads is not None and (not _is_int(self.threads) or self.threads < 1):
            raise ConfigurationError("threads must be a positive integer")

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigurationError(f"unknown config keys {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(doc)

    def to_json(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


# ---------------------------------------------------------------- context


@dataclass
class Context:
    """Where the link sits: enough to rebuild the seed and the extraction region."""

    preset: str
    scale: float
    centre: tuple
    tube_radius: float
    ball_radius: float
    field_margin: float | None = None
    box_pad: float = 0.25
    link_radius: float = 2.0

    def seed(self):
        return milnor_seed(self.preset, Placement(self.scale, tuple(self.centre)), self.tube_radius)

    def region(self) -> RegionUnion:
        lo, hi = self.seed().bounding_box(self.box_pad * self.scale)
        box = Box(tuple(map(float, lo)), tuple(map(float, hi)))
        return RegionUnion((box, box.mirrored()))

    def reference(self):
        curves = self.seed().curves
        return curves + [-c for c in curves]

    def to_json(self) -> dict:
        return {
            "preset": self.preset,
            "scale": self.scale,
            "centre": list(self.centre),
            "tubeRadius": self.tube_radius,
            "ballRadius": self.ball_radius,
            "fieldMargin": self.field_margin,
            "boxPad": self.box_pad,
            "linkRadius": self.link_radius,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Context":
        return cls(doc["preset"], float(doc["scale"]), tuple(doc["centre"]), float(doc["tubeRadius"]),
                   float(doc["ballRadius"]), doc.get("fieldMargin"), float(doc.get("boxPad", 0.25)),
                   float(doc.get("linkRadius", 2.0)))


def build_seed(config: PipelineConfig):
    kind = parse_preset(config.preset)
    pl = config.placement
    if "centre" in pl:
        scale = float(pl.get("scale", default_placement(kind).scale))
        placement = Placement(scale, tuple(float(c) for c in pl["centre"]))
    else:
        placement = default_placement(kind, pl.get("scale"), pl.get("clearance"))
    return milnor_seed(config.preset, placement)


def link_margin(field_, seed) -> float:
    """Transversality margin of ``field_`` along the seed link and its mirror."""
    pts = np.concatenate(seed.curves)
    pts = np.concatenate([pts, -pts])
    return float(smallest_singular(field_.evaluate(pts)[1]).min())


# ---------------------------------------------------------------- per-copy invariants


class CopyClassifier:
    """Split an extraction into mirror copies and classify the link components of each.

    A closed curve belongs to the copy whose box contains its centroid and
    is a link component when it stays within ``link_radius`` tube radii of
    the reference link. Picklable, so it can be handed to workers.
    """

    def __init__(self, context: Context, rng_seed: int = 0):
        self.context = context
        self.rng_seed = rng_seed
        self.parts = context.region().parts
        self.reference = context.reference()
        self.radius = context.link_radius * context.tube_radius

    def copies(self, result: ExtractionResult):
        out = []
        for part in self.parts:
            inside = [c for c in result.closed if part.contains(c.centroid()[None])[0]]
            near, far = near_reference(inside, self.reference, self.radius)
            out.append((near, far))
        return out

    def reports(self, result: ExtractionResult):
        reps = []
        for near, far in self.copies(result):
            try:
                rep = classify_link(near, self.context.preset, self.rng_seed).to_json()
            except DiagramError as exc:
                rep = {"componentCount": len(near), "classification": "unrecognized",
                       "matchesTarget": False, "error": str(exc),
                       "signature": signature_of(len(near), [], [])}
            rep["extraComponents"] = len(far)
            rep["minMargin"] = min((c.min_margin for c in near), default=0.0)
            reps.append(rep)
        return reps

    def __call__(self, result: ExtractionResult) -> str:
        return "|".join(r["signature"] for r in self.reports(result))


# ---------------------------------------------------------------- pipeline


@dataclass
class PipelineReport:
    config: dict
    stages: dict
    verdict: str
    reasons: list
    provenance: dict
    error: dict | None = None

    def to_json(self, timings: bool = True) -> dict:
        prov = dict(self.provenance)
        if not timings:
            prov.pop("timings", None)
        doc = {"config": self.config, "stages": self.stages, "verdict": self.verdict,
               "reasons": self.reasons, "provenance": prov}
        if self.error:
            doc["error"] = self.error
        return doc

    def dumps(self, timings: bool = True) -> str:
        return json.dumps(_jsonable(self.to_json(timings)), indent=1, sort_keys=True)

    @property
    def exit_code(self) -> int:
        if self.error:
            return EXIT_CONFIG if self.error.get("kind") == "configuration" else EXIT_NUMERIC
        return EXIT_PASS if self.verdict == "pass" else EXIT_FAIL


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _provenance(config: PipelineConfig) -> dict:
    return {
        "configHash": config.digest(),
        "versions": {"nodalknots": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "threads": config.threads or int(os.environ.get("NODALKNOTS_THREADS", os.cpu_count() or 1)),
        "timings": {},
    }


def _stage_fit(config, seed):
    samples = link_samples(seed)
    reg = config.tolerances["regularization"]
    af = auto_fit(
        seed,
        samples,
        l0_ladder=None if config.l0 == "auto" else [config.l0],
        reg_ladder=None if reg == "auto" else [float(reg)],
    )
    record = {
        "l0": af.l0,
        "regularization": af.regularization,
        "accepted": af.accepted,
        "delta": af.delta,
        "seedMargin": af.seed_margin,
        "c0Residual": af.field.meta["c0Residual"],
        "c1Residual": af.field.meta["c1Residual"],
        "rank": af.field.meta["rank"],
        "samples": len(samples),
        "attempts": len(af.history),
    }
    return af, record


def run_pipeline(config: PipelineConfig, out_dir=None, formats=None) -> PipelineReport:
    """Seed, fit, lift, compare, extract, classify and stress one preset.

    The verdict is ``pass`` when every mirror copy matches the target, the
    link components have positive margin, the lift margin ratio is below
    the gate and every stability trial preserves the signature.
    """
    stages, reasons = {}, []
    prov = _provenance(config)
    timings = prov["timings"]
    resolved = config.to_json()
    stage = "seed"

    def tick(name, t0):
        timings[name] = round(time.perf_counter() - t0, 3)

    try:
        t0 = time.perf_counter()
        seed = build_seed(config)
        far = max(float(np.linalg.norm(c, axis=1).max()) for c in seed.curves)
        ball = far + 4 * seed.tube_radius
        stages["seed"] = {
            "preset": preset_name(seed.kind),
            "scale": seed.placement.scale,
            "centre": list(seed.placement.centre),
            "tubeRadius": seed.tube_radius,
            "components": len(seed.curves),
            "ballRadius": ball,
        }
        tick(stage, t0)

        stage = "fit"
        t0 = time.perf_counter()
        af, stages["fit"] = _stage_fit(config, seed)
        field_ = af.field
        margin = link_margin(field_, seed)
        stages["fit"]["fieldMargin"] = margin
        resolved["l0"] = af.l0
        resolved["tolerances"]["regularization"] = af.regularization
        log.info("fit resolved l0=%d regularization=%g", af.l0, af.regularization)
        if not af.accepted:
            reasons.append("fit residual above half the seed margin")
        tick(stage, t0)

        stage = "lift"
        t0 = time.perf_counter()
        if config.khat == "auto":
            psi, rep, history = choose_khat(field_, ball, margin, max_khat=config.tolerances["maxKhat"],
                                            grid_res=config.grid["compare"])
        else:
            if 2 * config.khat < af.l0:
                raise ConfigurationError(f"khat={config.khat} is below l0/2={af.l0 // 2}")
            psi = lift(field_, config.khat)
            rep = rescaled_compare(psi, field_, ball, config.grid["compare"], margin)
            history = [{"khat": psi.khat, "c1Error": rep.c1_error, "marginRatio": rep.margin_ratio}]
        resolved["khat"] = psi.khat
        log.info("lift resolved khat=%d", psi.khat)
        stages["lift"] = {"khat": psi.khat, "lambda": psi.eigenvalue, "modes": len(psi.modes),
                          "history": history}
        stages["compare"] = rep.to_json()
        gate = config.tolerances["marginRatio"]
        if rep.margin_ratio is None or not rep.margin_ratio < gate:
            reasons.append(f"margin ratio {rep.margin_ratio} not below {gate}")
        tick(stage, t0)

        ctx = Context(preset_name(seed.kind), seed.placement.scale, tuple(seed.placement.centre),
                      seed.tube_radius, ball, margin, float(config.tolerances["boxPad"]),
                      float(config.tolerances["linkRadius"]))
        classifier = CopyClassifier(ctx, config.rngSeed)

        stage = "extract"
        t0 = time.perf_counter()
        region = ctx.region()
        result = extract_nodal_curves(lambda x: eval_rescaled(psi, x), region, config.grid["extract"])
        copies = classifier.copies(result)
        link_curves = [c for near, _ in copies for c in near]
        min_margin = min((c.min_margin for c in link_curves), default=0.0)
        summary = result.summary()
        summary.pop("arcLengths")
        stages["extract"] = {
            **summary,
            "region": region.to_json(),
            "linkComponents": [len(near) for near, _ in copies],
            "extraComponents": [len(far) for _, far in copies],
            "linkMinMargin": min_margin,
        }
        if not min_margin > 0:
            reasons.append("no link component with positive margin")
        tick(stage, t0)

        stage = "classify"
        t0 = time.perf_counter()
        reports = classifier.reports(result)
        stages["classify"] = {"copies": reports}
        if not all(r["matchesTarget"] for r in reports):
            reasons.append("classification does not match the target in every copy")
        tick(stage, t0)

        stage = "stability"
        t0 = time.perf_counter()
        trials = config.stability["trials"]
        if trials > 0 and min_margin > 0:
            st = perturb_and_retrace(psi, config.stability["epsilonRel"], trials, config.rngSeed,
                                     region, classifier, min_margin, config.grid["extract"])
            stages["stability"] = st.to_json()
            if st.preserved != st.trials:
                reasons.append(f"stability preserved {st.preserved}/{st.trials}")
        else:
            stages["stability"] = {"trials": 0, "skipped": True}
        tick(stage, t0)

        if out_dir is not None:
            _write_artifacts(Path(out_dir), field_, psi, ctx, link_curves, result, formats or config.outputs["formats"])
    except ConfigurationError as exc:
        return PipelineReport(resolved, stages, "fail", reasons, prov,
                              {"stage": stage, "kind": "configuration", "message": str(exc)})
    except Exception as exc:  # any numerical failure is reported with its stage
        log.exception("stage %s failed", stage)
        return PipelineReport(resolved, stages, "fail", reasons, prov,
                              {"stage": stage, "kind": "numerical", "message": f"{type(exc).__name__}: {exc}"})
    return PipelineReport(resolved, stages, "pass" if not reasons else "fail", reasons, prov)


# ---------------------------------------------------------------- artifacts


def _coeff_doc(field_, ctx: Context) -> dict:
    return {**field_.to_json(), "context": ctx.to_json()}


def _psi_doc(psi, ctx: Context) -> dict:
    return {**psi.to_json(), "context": ctx.to_json()}


def _curves_text(curves, fmt: str) -> str:
    if fmt == "json":
        return curves_to_json(curves)
    if fmt == "csv":
        return curves_to_csv(curves)
    if fmt == "obj":
        return curves_to_obj(curves)
    if fmt == "vtk":
        return curves_to_vtk(curves)
    raise ConfigurationError(f"unknown format {fmt!r}")


def _write_artifacts(out: Path, field_, psi, ctx, link_curves, result, formats):
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "coefficients.json", _coeff_doc(field_, ctx))
    _dump(out / "psi.json", _psi_doc(psi, ctx))
    for fmt in formats:
        (out / f"curves.{fmt}").write_text(_curves_text(result.closed, fmt))


def _dump(path: Path, doc):
    path.write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True))


def _read(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------- commands


def _config_from_args(args) -> PipelineConfig:
    doc = _read(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    if getattr(args, "preset", None):
        doc["preset"] = args.preset
    if args.seed is not None:
        doc["rngSeed"] = args.seed
    if args.threads is not None:
        doc["threads"] = args.threads
    if args.format:
        doc.setdefault("outputs", {})["formats"] = [args.format]
    for key in ("l0", "khat"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val if val == "auto" else _int_arg(val, key)
    return PipelineConfig.from_json(doc)


def _int_arg(val, name):
    try:
        return int(val)
    except ValueError as exc:
        raise ConfigurationError(f"{name} must be an integer or 'auto'") from exc


def _emit(args, doc):
    text = json.dumps(_jsonable(doc), indent=1, sort_keys=True)
    print(text)


def cmd_run(args) -> int:
    config = _config_from_args(args)
    out = Path(args.out) if args.out else None
    report = run_pipeline(config, out, [args.format] if args.format else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.dumps())
    print(report.dumps())
    return report.exit_code


def cmd_synth(args) -> int:
    config = _config_from_args(args)
    seed = build_seed(config)
    af, record = _stage_fit(config, seed)
    margin = link_margin(af.field, seed)
    far = max(float(np.linalg.norm(c, axis=1).max()) for c in seed.curves)
    ctx = Context(preset_name(seed.kind), seed.placement.scale, tuple(seed.placement.centre),
                  seed.tube_radius, far + 4 * seed.tube_radius, margin,
                  float(config.tolerances["boxPad"]), float(config.tolerances["linkRadius"]))
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "coefficients.json", _coeff_doc(af.field, ctx))
    _emit(args, {"fit": {**record, "fieldMargin": margin}, "coefficients": str(out / "coefficients.json")})
    return EXIT_PASS if af.accepted else EXIT_FAIL


def _load_coefficients(path):
    doc = _read(path)
    return FourierBesselField.from_json(doc), Context.from_json(doc["context"])


def _load_psi(path):
    doc = _read(path)
    return OscillatorEigenfunction.from_json(doc), Context.from_json(doc["context"])


def cmd_lift(args) -> int:
    field_, ctx = _load_coefficients(args.coefficients)
    if args.khat in (None, "auto"):
        psi, rep, history = choose_khat(field_, ctx.ball_radius, ctx.field_margin)
    else:
        khat = _int_arg(args.khat, "khat")
        if 2 * khat < field_.l0:
            raise ConfigurationError(f"khat={khat} is below l0/2")
        psi = lift(field_, khat)
        rep = rescaled_compare(psi, field_, ctx.ball_radius, margin=ctx.field_margin)
        history = [{"khat": khat, "c1Error": rep.c1_error, "marginRatio": rep.margin_ratio}]
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "psi.json", _psi_doc(psi, ctx))
    _emit(args, {"khat": psi.khat, "lambda": psi.eigenvalue, "history": history, "psi": str(out / "psi.json")})
    return EXIT_PASS


def cmd_compare(args) -> int:
    psi, _ = _load_psi(args.psi)
    field_, ctx = _load_coefficients(args.coefficients)
    rep = rescaled_compare(psi, field_, ctx.ball_radius, args.grid or 48, ctx.field_margin)
    _emit(args, rep.to_json())
    return EXIT_PASS if rep.margin_ratio is not None and rep.margin_ratio < 0.5 else EXIT_FAIL


def cmd_extract(args) -> int:
    psi, ctx = _load_psi(args.psi)
    region = ctx.region()
    result = extract_nodal_curves(lambda x: eval_rescaled(psi, x), region, args.grid or 32)
    fmt = args.format or "json"
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"curves.{fmt}"
    text = _curves_text(result.closed, fmt)
    if fmt == "json":
        doc = json.loads(text)
        doc["context"] = ctx.to_json()
        text = json.dumps(doc)
    path.write_text(text)
    summary = result.summary()
    summary.pop("arcLengths")
    _emit(args, {**summary, "curvesFile": str(path)})
    return EXIT_PASS


def cmd_classify(args) -> int:
    doc = _read(args.curves)
    curves = [NodalCurve.from_json(d) for d in doc["curves"]]
    if "context" in doc and not args.preset:
        ctx = Context.from_json(doc["context"])
        result = ExtractionResult(curves, 0.0, 0.0, 0.0)
        reports = CopyClassifier(ctx, args.seed or 0).reports(result)
        _emit(args, {"copies": reports})
        ok = all(r["matchesTarget"] for r in reports)
    else:
        if not args.preset:
            raise ConfigurationError("classify needs --preset when the curves carry no context")
        rep = classify_link([c for c in curves if c.closed], args.preset, args.seed or 0)
        _emit(args, rep.to_json())
        ok = rep.matches_target
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_stability(args) -> int:
    psi, ctx = _load_psi(args.psi)
    classifier = CopyClassifier(ctx, args.seed or 0)
    region = ctx.region()
    grid = args.grid or 32
    ref = extract_nodal_curves(lambda x: eval_rescaled(psi, x), region, grid)
    links = [c for near, _ in classifier.copies(ref) for c in near]
    margin = min((c.min_margin for c in links), default=0.0)
    if not margin > 0:
        raise StageError("stability", "reference extraction has no link component with positive margin")
    st = perturb_and_retrace(psi, args.epsilon, args.trials, args.seed or 0, region, classifier, margin, grid)
    _emit(args, st.to_json())
    return EXIT_PASS if st.preserved == st.trials else EXIT_FAIL


def cmd_export(args) -> int:
    doc = _read(args.curves)
    curves = curves_from_json(json.dumps({"curves": doc["curves"]}))
    fmt = args.format or "obj"
    text = _curves_text(curves, fmt)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"curves.{fmt}").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int, help="RNG seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=_FORMATS, help="curve output format")
    common.add_argument("--threads", type=int, help="worker count (overrides NODALKNOTS_THREADS)")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="nodalknots", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", parents=[common], help="full pipeline")
    s.add_argument("--preset")
    s.add_argument("--l0")
    s.add_argument("--khat")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", parents=[common], help="seed and fit; writes coefficients.json")
    s.add_argument("--preset")
    s.add_argument("--l0")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("lift", parents=[common], help="lift coefficients; writes psi.json")
    s.add_argument("coefficients")
    s.add_argument("--khat", default="auto")
    s.set_defaults(func=cmd_lift)

    s = sub.add_parser("compare", parents=[common], help="rescaled C1 comparison")
    s.add_argument("psi")
    s.add_argument("coefficients")
    s.add_argument("--grid", type=int)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("extract", parents=[common], help="trace nodal curves of psi")
    s.add_argument("psi")
    s.add_argument("--grid", type=int)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("classify", parents=[common], help="invariants of extracted curves")
    s.add_argument("curves")
    s.add_argument("--preset")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("stability", parents=[common], help="perturb and retrace")
    s.add_argument("psi")
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--grid", type=int)
    s.set_defaults(func=cmd_stability)

    s = sub.add_parser("export", parents=[common], help="convert curves JSON")
    s.add_argument("curves")
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
