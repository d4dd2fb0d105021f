"""Command-line entry point: ``idslkit <command> ...``.

Commands read and write files only.  Exit status is 0 on success, 1 when a
module rejects the input (bad scene, unparseable plan, ...) and 2 for usage
errors.  Every output is written to a temporary file and renamed into place,
so an interrupted run never leaves a half-written file behind.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import cad, text
from .idsl import IDSLError, SceneState, parse_idsl, serialize_idsl, validate
from .metrics import EvalConfig, evaluate
from .optimizer import OptimizerConfig, optimize
from .scenegen import (
    GenerateConfig,
    MatchWeights,
    RefineConfig,
    export_mtl,
    export_obj,
    export_svg,
    generate_scene,
    load_corpus,
    load_presets,
)

log = logging.getLogger("idslkit")

SEED_MAX = 2**64 - 1
_UMASK = os.umask(0o022)
os.umask(_UMASK)
EXAMPLES = ("bedroom",)


class UsageError(Exception):
    """Bad flag combination discovered after argument parsing."""


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _section(cls, raw: Mapping | None, name: str):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    bad = sorted(set(raw) - known)
    if bad:
        raise ConfigError(f"unknown {name} keys: {bad}")
    return cls(**raw)


@dataclass
class PipelineConfig:
    presets: Path | None = None
    corpus: Path | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    match: MatchWeights = field(default_factory=MatchWeights)
    refine: RefineConfig = field(default_factory=RefineConfig)
    seed: int = 0
    backend: str = "rules"
    llm: dict = field(default_factory=dict)

    def check(self) -> None:
        if not (isinstance(self.seed, int) and 0 <= self.seed <= SEED_MAX):
            raise ConfigError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")
        if self.backend not in ("rules", "llm"):
            raise ConfigError(f"backend must be 'rules' or 'llm', got {self.backend!r}")
        for name in ("presets", "corpus"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name} path does not exist: {p}")
        self.optimizer.seed = self.seed

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PipelineConfig":
        raw = dict(raw)
        known = {"paths", "optimizer", "eval", "match", "refine", "seed", "backend", "llm"}
        bad = sorted(set(raw) - known)
        if bad:
            raise ConfigError(f"unknown config sections: {bad}")
        paths = dict(raw.get("paths") or {})
        bad = sorted(set(paths) - {"presets", "corpus"})
        if bad:
            raise ConfigError(f"unknown paths keys: {bad}")
        try:
            opt = OptimizerConfig.from_dict(raw.get("optimizer") or {})
        except ValueError as e:
            raise ConfigError(str(e)) from e
        cfg = cls(
            presets=Path(paths["presets"]) if paths.get("presets") else None,
            corpus=Path(paths["corpus"]) if paths.get("corpus") else None,
            optimizer=opt,
            eval=_section(EvalConfig, raw.get("eval"), "eval"),
            match=_section(MatchWeights, raw.get("match"), "match"),
            refine=_section(RefineConfig, raw.get("refine"), "refine"),
            seed=raw.get("seed", opt.seed),
            backend=raw.get("backend", "rules"),
            llm=dict(raw.get("llm") or {}),
        )
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        if path is None:
            return cls()
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "paths": {"presets": None if self.presets is None else str(self.presets), "corpus": None if self.corpus is None else str(self.corpus)},
            "optimizer": self.optimizer.to_dict(),
            "eval": asdict(self.eval),
            "match": asdict(self.match),
            "refine": asdict(self.refine),
            "seed": self.seed,
            "backend": self.backend,
            "llm": self.llm,
        }


def _apply_flags(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    """Command-line flags override the config file."""
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "max_iters", None) is not None:
        cfg.optimizer.max_iters = args.max_iters
    if getattr(args, "T0", None) is not None:
        cfg.optimizer.T0 = args.T0
    if getattr(args, "presets", None) is not None:
        cfg.presets = Path(args.presets)
    if getattr(args, "corpus", None) is not None:
        cfg.corpus = Path(args.corpus)
    if getattr(args, "backend", None) is not None:
        cfg.backend = args.backend
    if getattr(args, "endpoint", None) is not None:
        cfg.llm["endpoint"] = args.endpoint
    if getattr(args, "model", None) is not None:
        cfg.llm["model"] = args.model
    if getattr(args, "cell", None) is not None:
        cfg.eval = EvalConfig(**{**asdict(cfg.eval), "cell": args.cell})
    try:
        cfg.optimizer.check()
    except ValueError as e:
        raise ConfigError(str(e)) from e
    cfg.check()
    return cfg


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------


def write_atomic(path: str | Path, data: bytes) -> Path:
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_UMASK)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def _json_bytes(obj: Any) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n").encode()


def _read(path: str | Path) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input does not exist: {p}")
    return p.read_bytes()


def load_scene(path: str | Path) -> SceneState:
    return parse_idsl(_read(path))


def example_text(name: str) -> str:
    if name not in EXAMPLES:
        raise UsageError(f"unknown example {name!r}; choose from {list(EXAMPLES)}")
    return resources.files("idslkit").joinpath(f"data/examples/{name}.txt").read_text()


def _cad_format(path: Path, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "dxf" if path.suffix.lower() == ".dxf" else "json"


def _text_backend(cfg: PipelineConfig):
    if cfg.backend == "rules":
        return "rules"
    opts = dict(cfg.llm)
    if not opts.get("endpoint"):
        raise ConfigError("the llm backend needs an endpoint (--endpoint or llm.endpoint in the config)")
    return text.LlmBackendConfig(**opts)


def _generate_config(cfg: PipelineConfig, no_refine: bool = False) -> GenerateConfig:
    return GenerateConfig(weights=cfg.match, refine=None if no_refine else cfg.refine)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_parse_cad(args, cfg: PipelineConfig) -> int:
    src = Path(args.input)
    layer_map = json.loads(Path(args.layer_map).read_text()) if args.layer_map else None
    state = cad.parse_cad(_read(src), _cad_format(src, args.format), layer_map=layer_map, building_id=args.building_id)
    write_atomic(args.out, serialize_idsl(state))
    log.info("wrote %s (%d rooms, %d objects)", args.out, len(state.rooms), len(state.objects))
    return 0


def _prompt(args) -> str:
    if getattr(args, "text", None) is not None:
        return args.text
    if getattr(args, "file", None) is not None:
        return _read(args.file).decode("utf-8")
    return example_text(args.example)


def cmd_parse_text(args, cfg: PipelineConfig) -> int:
    state = text.parse_text(_prompt(args), _text_backend(cfg), on_ambiguity=args.on_ambiguity)
    write_atomic(args.out, serialize_idsl(state))
    log.info("wrote %s (%d rooms, %d objects)", args.out, len(state.rooms), len(state.objects))
    return 0


def cmd_validate(args, cfg: PipelineConfig) -> int:
    status = 0
    for path in args.scenes:
        try:
            issues = validate(load_scene(path))
        except IDSLError as e:
            print(f"{path}: error: {e}")
            status = 1
            continue
        errors = [i for i in issues if i.severity == "error"]
        for i in issues:
            print(f"{path}: {i.severity}: {i.path}: {i.message}")
        if errors:
            status = 1
        elif not issues:
            print(f"{path}: ok")
    return status


def _optimize_one(job: tuple[str, str, str | None, dict]) -> dict:
    src, out, trace_path, opt = job
    state = load_scene(src)
    final, trace = optimize(state, OptimizerConfig.from_dict(opt))
    write_atomic(out, serialize_idsl(final))
    if trace_path:
        write_atomic(trace_path, trace.to_jsonl().encode())
    return {"input": src, "output": out, **trace.summary()}


def _optimize_jobs(args) -> list[tuple[str, str, str | None]]:
    if len(args.scenes) == 1 and args.out:
        return [(args.scenes[0], args.out, args.trace)]
    if not args.out_dir:
        raise UsageError("several input scenes need --out-dir")
    if args.trace:
        raise UsageError("--trace takes one scene; with --out-dir traces are written next to each output")
    out_dir = Path(args.out_dir)
    jobs = []
    seen = set()
    for s in args.scenes:
        stem = Path(s).name.split(".")[0]
        if stem in seen:
            raise UsageError(f"two inputs share the output name {stem!r}")
        seen.add(stem)
        jobs.append((s, str(out_dir / f"{stem}.idsl.json"), str(out_dir / f"{stem}.trace.jsonl")))
    return jobs


def cmd_optimize(args, cfg: PipelineConfig) -> int:
    opt = cfg.optimizer.to_dict()
    jobs = [(*j, opt) for j in _optimize_jobs(args)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_optimize_one, jobs))
    else:
        results = [_optimize_one(j) for j in jobs]
    for r in results:
        log.info("%s -> %s: %d iterations, %s", r["input"], r["output"], r["iterations"], r["exit_reason"])
    return 0


def _assets(cfg: PipelineConfig):
    presets = load_presets(cfg.presets)
    corpus = load_corpus(cfg.corpus) if cfg.corpus else None
    return presets, corpus


def _write_generated(out, args) -> None:
    mtl = Path(args.mtl).name if getattr(args, "mtl", None) else None
    if args.obj:
        write_atomic(args.obj, export_obj(out.meshes, mtl_name=mtl))
    if getattr(args, "mtl", None):
        write_atomic(args.mtl, export_mtl(out.meshes))
    if args.svg:
        write_atomic(args.svg, export_svg(out.state))


def cmd_generate(args, cfg: PipelineConfig) -> int:
    if not (args.obj or args.svg or args.out):
        raise UsageError("generate needs at least one of --obj, --svg, --out")
    presets, corpus = _assets(cfg)
    out = generate_scene(load_scene(args.scene), presets, corpus, _generate_config(cfg, args.no_refine))
    _write_generated(out, args)
    if args.out:
        write_atomic(args.out, serialize_idsl(out.state))
    if args.summary:
        write_atomic(args.summary, _json_bytes(out.summary()))
    return 0


def _report(ref: SceneState, gen: SceneState, cfg: PipelineConfig, **extra) -> dict:
    r = evaluate(ref, gen, cfg=cfg.eval).as_dict()
    r.update(extra)
    return r


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    report = _report(load_scene(args.ref), load_scene(args.gen), cfg, reference=str(args.ref), generated=str(args.gen))
    write_atomic(args.report, _json_bytes(report))
    print(f"LF {report['lf']:.4f}  CSR_rel {report['csr_rel']:.4f}  CSR_count {report['csr_count_strict']:.4f}  #OB {report['n_ob']}  #CN {report['n_cn']}")
    return 0


def cmd_pipeline(args, cfg: PipelineConfig) -> int:
    """parse -> optimize -> generate -> evaluate, all outputs in one directory."""
    out_dir = Path(args.out_dir)
    if args.cad:
        src = Path(args.cad)
        s0 = cad.parse_cad(_read(src), _cad_format(src, args.format))
    else:
        s0 = text.parse_text(_prompt(args), _text_backend(cfg), on_ambiguity=args.on_ambiguity)
    s1, trace = optimize(s0, cfg.optimizer)
    presets, corpus = _assets(cfg)
    out = generate_scene(s1, presets, corpus, _generate_config(cfg, args.no_refine))
    ref = load_scene(args.ref) if args.ref else s0
    report = _report(
        ref,
        out.state,
        cfg,
        reference=str(args.ref) if args.ref else "parsed input",
        optimizer=trace.summary(),
        generation=out.summary(),
        config=cfg.to_dict(),
    )
    write_atomic(out_dir / "scene.idsl.json", serialize_idsl(out.state))
    write_atomic(out_dir / "scene.obj", export_obj(out.meshes, mtl_name=None))
    write_atomic(out_dir / "scene.svg", export_svg(out.state))
    write_atomic(out_dir / "report.json", _json_bytes(report))
    if args.trace:
        write_atomic(args.trace, trace.to_jsonl().encode())
    print(f"{out_dir}: n_ob={report['n_ob']} n_cn={report['n_cn']} csr_rel={report['csr_rel']:.3f} iterations={trace.summary()['iterations']}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _seed(v: str) -> int:
    try:
        n = int(v, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {v!r}") from None
    if not 0 <= n <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return n


def _positive_int(v: str) -> int:
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _text_source(p: argparse.ArgumentParser, example: bool = False) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--text", help="description given inline")
    g.add_argument("--file", help="read the description from a file")
    if example:
        g.add_argument("--example", choices=EXAMPLES, help="use a bundled description")
        g.add_argument("--cad", help="start from a floor plan (.dxf or .plan.json) instead of text")


def _backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("rules", "llm"), help="text parser backend (default: rules, offline)")
    p.add_argument("--endpoint", help="chat-completions base URL for --backend llm")
    p.add_argument("--model", help="model name for --backend llm")
    p.add_argument("--on-ambiguity", choices=("error", "first-room"), default="error")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="idslkit", description="Parse, optimize, generate and evaluate IDSL indoor scenes.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("parse-cad", parents=[common], help="floor plan (.dxf / .plan.json) -> IDSL")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("dxf", "json"), help="default: from the file suffix")
    p.add_argument("--layer-map", help="JSON file mapping DXF layer names to roles")
    p.add_argument("--building-id", default="building_0")
    p.set_defaults(func=cmd_parse_cad)

    p = sub.add_parser("parse-text", parents=[common], help="description -> IDSL")
    _text_source(p)
    _backend_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse_text)

    p = sub.add_parser("validate", parents=[common], help="check IDSL files; exit 1 on any error")
    p.add_argument("scenes", nargs="+")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("optimize", parents=[common], help="annealing layout optimization")
    p.add_argument("scenes", nargs="+")
    p.add_argument("--out", help="output scene (single input)")
    p.add_argument("--out-dir", help="output directory (several inputs)")
    p.add_argument("--trace", help="JSON-lines trace (single input)")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--T0", type=float)
    p.add_argument("--jobs", type=_positive_int, default=1, help="scenes optimized in parallel")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("generate", parents=[common], help="IDSL -> OBJ / SVG")
    p.add_argument("scene")
    p.add_argument("--presets", help="preset directory (default: bundled)")
    p.add_argument("--corpus", help="asset metadata JSONL (default: bundled)")
    p.add_argument("--obj")
    p.add_argument("--mtl", help="also write a material library")
    p.add_argument("--svg")
    p.add_argument("--out", help="refined scene as IDSL")
    p.add_argument("--summary", help="JSON summary of meshes and asset choices")
    p.add_argument("--no-refine", action="store_true", help="skip post-placement refinement")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common], help="compare a generated scene with a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--cell", type=float, help="raster cell size in metres for layout fidelity")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[common], help="parse, optimize, generate and evaluate in one go")
    _text_source(p, example=True)
    _backend_flags(p)
    p.add_argument("--format", choices=("dxf", "json"))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ref", help="reference scene for the report (default: the parsed input)")
    p.add_argument("--trace")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--T0", type=float)
    p.add_argument("--presets")
    p.add_argument("--corpus")
    p.add_argument("--cell", type=float)
    p.add_argument("--no-refine", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return parser


def _module_of(exc: BaseException) -> str:
    mod = type(exc).__module__
    if mod.startswith("idslkit."):
        return mod.split(".")[-1]
    return "io" if isinstance(exc, OSError) else "idslkit"


DOMAIN_ERRORS = (
    IDSLError,
    cad.CadError,
    text.TextParseError,
    text.LlmTransportError,
    text.LlmResponseError,
    ConfigError,
    ValueError,
    OSError,
)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _apply_flags(PipelineConfig.load(args.config), args)
        return args.func(args, cfg)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"idslkit {args.command}: error: {e}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as e:
        print(f"idslkit {args.command}: {_module_of(e)}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
