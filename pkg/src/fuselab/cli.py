"""Command-line entry point: ``fuselab <command> [options]``.

Exit status: 0 success, 2 usage or configuration error, 3 data error
(including missing inputs), 4 numerical failure, 1 anything else raised by
the library. Every artifact is written atomically and carries the tool
version and a hash of the fully resolved run configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, FuselabError, NumericalError

log = logging.getLogger("fuselab")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration

def load_toml(path):
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: invalid TOML: {exc}") from None


def resolve_seed(cli_seed, file_cfg):
    if cli_seed is not None:
        return int(cli_seed)
    if "seed" in file_cfg:
        return int(file_cfg["seed"])
    env = os.environ.get("FUSELAB_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"FUSELAB_SEED must be an integer, got {env!r}") from None
    return 0


def hierarchy_config(file_cfg, seed, jobs, n_starts=None, include_rotation=None):
    """Stage configs: defaults, then ``[train]`` (all stages), then ``[train.<stage>]``."""
    from .fusion import STAGES, HierarchyConfig
    from .gp import GpConfig

    train = dict(file_cfg.get("train", {}))
    per_stage = {s: train.pop(s) for s in STAGES if s in train}
    inc = train.pop("include_rotation", False) if include_rotation is None else include_rotation
    base = HierarchyConfig(include_rotation=bool(inc), seed=seed)
    fields = set(GpConfig.__dataclass_fields__)
    stages = {}
    for name, cfg in base.stages.items():
        over = {**train, **per_stage.get(name, {})}
        if n_starts is not None:
            over["n_starts"] = n_starts
        over["jobs"] = jobs
        bad = sorted(set(over) - fields)
        if bad:
            raise UsageError(f"unknown training option(s) {bad}")
        for key in ("hidden", "omega_bounds"):
            if key in over:
                over[key] = tuple(over[key])
        try:
            stages[name] = replace(cfg, **over)
        except TypeError as exc:
            raise UsageError(str(exc)) from None
    return replace(base, stages=stages)


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def header_lines(command, resolved):
    return [f"fuselab {__version__} {command} config_sha256={config_hash(resolved)}",
            "config " + json.dumps(resolved, sort_keys=True, separators=(",", ":"))]


def with_meta(doc: dict, command, resolved) -> dict:
    out = dict(doc)
    out["_meta"] = {"tool": "fuselab", "version": __version__, "command": command,
                    "config_sha256": config_hash(resolved), "config": resolved}
    return out


def write_json(path, doc, command, resolved):
    from .io import atomic_write, dumps_json

    atomic_write(path, dumps_json(with_meta(doc, command, resolved)))
    log.info("wrote %s", path)


def emit_json(path, doc, command, resolved):
    if path:
        write_json(path, doc, command, resolved)
    else:
        sys.stdout.write(json.dumps(with_meta(doc, command, resolved), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows, command, resolved):
    from .io import atomic_write, table_to_csv

    text = table_to_csv(header, rows, header_lines(command, resolved))
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write(path, text)
        log.info("wrote %s", path)


def _csv_floats(text, n, what):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{what}: expected {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"{what}: expected {n} comma-separated numbers, got {text!r}")
    return vals


def _load_pipeline(path):
    from .fusion import HierarchyPipeline

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"pipeline file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        doc.pop("_meta", None)
        return HierarchyPipeline.from_dict(doc)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DomainError(f"{path}: not a valid pipeline document ({exc})") from None


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args, cfg):
    from .io import atomic_write, cuboids_to_csv, dumps_json, tensile_to_csv
    from .synthetic import CampaignSpec, generate_campaign

    spec_d = dict(cfg.get("synth", {}))
    if args.spec:
        p = Path(args.spec)
        if not p.exists():
            raise FileNotFoundError(f"spec file not found: {p}")
        try:
            spec_d.update(json.loads(p.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise DomainError(f"{p}: invalid JSON ({exc})") from None
    if args.seed is not None or "seed" not in spec_d:
        spec_d["seed"] = args.resolved_seed
    try:
        spec = CampaignSpec.from_dict(spec_d)
    except TypeError as exc:
        raise DomainError(f"invalid campaign spec: {exc}") from None
    cub, ten, truth = generate_campaign(spec)
    resolved = {"spec": spec.to_dict()}
    hdr = header_lines("synth", resolved)
    out = Path(args.out_dir)
    atomic_write(out / "cuboids.csv", cuboids_to_csv(cub, hdr))
    atomic_write(out / "tensile.csv", tensile_to_csv(ten, hdr))
    t_params = [t.params for t in ten]
    tv = truth.evaluate(t_params)
    cv_ = truth.evaluate([c.params for c in cub])
    doc = {
        "family": truth.family,
        "rotation_effect": truth.rotation_effect,
        "cuboids": {str(c.id): {"hardness": float(h), "porosity": float(p)}
                    for c, h, p in zip(cub, cv_["hardness"], cv_["porosity"])},
        "tensile": {str(t.id): {"yield_strength": float(a), "ductility": float(b)}
                    for t, a, b in zip(ten, tv["yield_strength"], tv["ductility"])},
    }
    write_json(out / "truth.json", doc, "synth", resolved)
    return 0


def cmd_porosity(args, cfg):
    from .imaging import IMAGE_SUFFIXES, load_image, pixel_histogram, process_image

    icfg = cfg.get("imaging", {})
    threshold = args.threshold if args.threshold is not None else int(icfg.get("threshold", 75))
    crop = args.crop or icfg.get("crop", "50,50,50,80")
    margins = [int(v) for v in _csv_floats(crop if isinstance(crop, str) else ",".join(map(str, crop)), 4, "--crop")]
    blur = args.blur if args.blur is not None else int(icfg.get("blur", 5))
    sigma = args.sigma if args.sigma is not None else icfg.get("sigma")
    src = Path(args.input)
    if not src.exists():
        raise FileNotFoundError(f"input not found: {src}")
    files = [src] if src.is_file() else sorted(p for p in src.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DomainError(f"{src}: no PNG or TIFF images found")
    resolved = {"threshold": threshold, "crop": margins, "blur": blur, "sigma": sigma}
    rows, hist_rows = [], []
    for f in files:
        frac, processed = process_image(load_image(f), tuple(margins), blur, sigma, threshold)
        rows.append((f.name, frac))
        if args.hist:
            hist_rows.append([f.name, *pixel_histogram(processed).tolist()])
    write_csv(args.out, ["filename", "porosity"], rows, "porosity", resolved)
    if args.hist:
        write_csv(args.hist, ["filename", *[f"b{i}" for i in range(256)]], hist_rows, "porosity", resolved)
    return 0


def cmd_train(args, cfg):
    from .io import read_cuboids, read_tensile
    from .fusion import train_hierarchy

    cub, ten = read_cuboids(args.cuboids), read_tensile(args.tensile)
    hconf = hierarchy_config(cfg, args.resolved_seed, args.jobs, args.n_starts,
                             True if args.include_rotation else None)
    pipe = train_hierarchy(cub, ten, hconf)
    write_json(args.out, pipe.to_dict(), "train", {"hierarchy": hconf.to_dict()})
    return 0


TARGETS = {"hardness": "cuboid", "porosity": "cuboid", "ys": "tensile", "ef": "tensile", "uts": "tensile"}


def _detect_kind(path):
    from .io import CUBOID_HEADER

    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input file not found: {p}")
    for line in p.read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.lstrip().startswith("#"):
            return "cuboid" if "hardness_hv" in line.split(",") and set(CUBOID_HEADER) <= set(line.split(",")) \
                else "tensile"
    raise DomainError(f"{p}: empty file")


def cmd_cv(args, cfg):
    from .analysis import kfold_cv
    from .fusion import _dataset
    from .io import read_cuboids, read_tensile

    kind = _detect_kind(args.data)
    target = args.target or ("hardness" if kind == "cuboid" else "ys")
    if TARGETS[target] != kind:
        raise DomainError(f"target {target!r} needs a {TARGETS[target]} file, got a {kind} file")
    recs = read_cuboids(args.data) if kind == "cuboid" else read_tensile(args.data)
    getter = {"hardness": "hardness", "porosity": "porosity", "ys": "yield_strength",
              "ef": "ductility", "uts": "ultimate_strength"}[target]
    y = np.array([getattr(r, getter) for r in recs], dtype=float)
    if np.isnan(y).any():
        raise DomainError(f"{args.data}: missing {target} values")
    hconf = hierarchy_config(cfg, args.resolved_seed, args.jobs, args.n_starts, True if args.include_rotation else None)
    gconf = hconf.stages["h"]
    data = _dataset([r.params for r in recs], [], [], y, hconf.include_rotation)
    rep = kfold_cv(data, args.k, gconf, args.resolved_seed, squared=args.squared)
    resolved = {"data": Path(args.data).name, "target": target, "k": args.k, "seed": args.resolved_seed,
                "squared": args.squared, "gp": gconf.to_dict(), "include_rotation": hconf.include_rotation}
    doc = rep.to_dict()
    doc["target"] = target
    emit_json(args.out, doc, "cv", resolved)
    return 0


def cmd_sobol(args, cfg):
    from .analysis import pipeline_sobol, screen_features

    pipe = _load_pipeline(args.pipeline)
    rep = pipeline_sobol(pipe, args.stage, args.n, args.resolved_seed)
    kept, dropped = screen_features(rep, args.threshold)
    doc = rep.to_dict()
    doc.update(stage=args.stage, kept=kept, dropped=dropped, threshold=args.threshold)
    resolved = {"pipeline": Path(args.pipeline).name, "stage": args.stage, "n_base": args.n,
                "seed": args.resolved_seed, "threshold": args.threshold}
    emit_json(args.out, doc, "sobol", resolved)
    return 0


def cmd_corr(args, cfg):
    from .analysis import pearson_matrix
    from .io import read_cuboids, read_tensile

    cub, ten = read_cuboids(args.cuboids), read_tensile(args.tensile)
    by_id = {c.id: c for c in cub}
    by_params = {c.params: c for c in cub}
    cols = {"hardness": [], "porosity": [], "ys": [], "uts": [], "ef": []}
    for t in ten:
        c = by_params.get(t.params) or by_id.get(t.id)
        if c is None:
            raise DomainError(f"tensile id={t.id} has no matching cuboid")
        cols["hardness"].append(c.hardness)
        cols["porosity"].append(c.porosity)
        cols["ys"].append(t.yield_strength)
        cols["uts"].append(t.ultimate_strength)
        cols["ef"].append(t.ductility)
    if any(v is None for v in cols["uts"]):
        del cols["uts"]
    names, M = pearson_matrix(cols)
    rows = [[n, *M[i].tolist()] for i, n in enumerate(names)]
    resolved = {"cuboids": Path(args.cuboids).name, "tensile": Path(args.tensile).name}
    write_csv(args.out, ["property", *names], rows, "corr", resolved)
    return 0


def _filters(args, cfg):
    from .optimizer import Filters

    fc = {**Filters().to_dict(), **cfg.get("filters", {})}
    for key in ("ved_min", "ved_max", "ys_min", "ef_min"):
        v = getattr(args, key)
        if v is not None:
            fc[key] = None if str(v).lower() in ("none", "off") else float(v)
    try:
        return Filters(**fc)
    except TypeError as exc:
        raise UsageError(f"invalid [filters] section: {exc}") from None


def cmd_optimize(args, cfg):
    from .optimizer import rank_by_uncertainty, screen

    pipe = _load_pipeline(args.pipeline)
    filters = _filters(args, cfg)
    cs = screen(pipe, args.n, None, filters, args.resolved_seed, args.sampler)
    sub = cs if args.all else cs.passing()
    resolved = {"pipeline": Path(args.pipeline).name, "n": args.n, "seed": args.resolved_seed,
                "sampler": args.sampler, "filters": filters.to_dict(), "rank": args.rank, "all": args.all}
    header = ["rank", "power_w", "speed_mm_s", "layer_um", "hatch_um", "scan_rot", "ved", "ys_pred", "ys_sd",
              "ef_pred", "ef_sd", "objective", "pass_ved", "pass_ys", "pass_ef", "pass_all"]
    if len(sub) == 0:
        log.warning("no candidate passed the filters")
        write_csv(args.out, header, [], "optimize", resolved)
        return 0
    order = rank_by_uncertainty(sub, args.rank)
    obj = sub.objective
    passed = sub.passed
    rows = []
    for r, i in enumerate(order, start=1):
        p = sub.params[i]
        rows.append([r, p.power, p.speed, p.layer_um, p.hatch_um, int(p.scan_rotation), sub.ved[i], sub.ys[i],
                     sub.ys_sd[i], sub.ef[i], sub.ef_sd[i], None if np.isnan(obj[i]) else obj[i],
                     int(sub.flags["ved"][i]), int(sub.flags["ys"][i]), int(sub.flags["ef"][i]), int(passed[i])])
    write_csv(args.out, header, rows, "optimize", resolved)
    pick = min(max(args.pick, 1), len(rows))
    chosen = rows[pick - 1]
    print(f"pick {pick}: power={chosen[1]:.6g} speed={chosen[2]:.6g} layer_um={chosen[3]:.6g} "
          f"hatch_um={chosen[4]:.6g} scan_rot={chosen[5]} ys={chosen[7]:.6g} ef={chosen[9]:.6g}")
    return 0


def _parse_fixed(text):
    out = {}
    for item in filter(None, (text or "").split(",")):
        if "=" not in item:
            raise UsageError(f"--fixed expects name=value pairs, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"--fixed: non-numeric value in {item!r}") from None
    return out


def cmd_map(args, cfg):
    from .optimizer import design_map

    pipe = _load_pipeline(args.pipeline)
    free = tuple(s.strip() for s in args.free.split(","))
    if len(free) != 2:
        raise UsageError("--free expects exactly two parameter names")
    fixed = _parse_fixed(args.fixed)
    dm = design_map(pipe, free, fixed, args.res)
    resolved = {"pipeline": Path(args.pipeline).name, "free": list(free), "fixed": fixed, "res": args.res}
    write_csv(args.out, [dm.x_name, dm.y_name, "ved", "ys_pred", "ef_pred", "objective"], list(dm.rows()),
              "map", resolved)
    if args.isolines:
        rows = [(lv, x, y) for lv, pts in dm.isolines.items() for x, y in pts]
        write_csv(args.isolines, ["ved_level", dm.x_name, dm.y_name], rows, "map", resolved)
    return 0


def cmd_predict(args, cfg):
    from .domain import ProcessParams, compute_ved
    from .fusion import predict_tensile

    pipe = _load_pipeline(args.pipeline)
    params = []
    for text in args.params:
        vals = _csv_floats(text, 5, "--params")
        params.append(ProcessParams.from_um(*vals[:4], int(vals[4])))
    pred = predict_tensile(pipe, params)
    rows = [[p.power, p.speed, p.layer_um, p.hatch_um, int(p.scan_rotation), pred.ys_mean[i], pred.ys_sd[i],
             pred.ef_mean[i], pred.ef_sd[i], compute_ved(p)] for i, p in enumerate(params)]
    header = ["power_w", "speed_mm_s", "layer_um", "hatch_um", "scan_rot", "ys_pred", "ys_sd", "ef_pred", "ef_sd",
              "ved"]
    write_csv(args.out, header, rows, "predict", {"pipeline": Path(args.pipeline).name, "params": args.params})
    return 0


# ---------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run.toml with overrides of the defaults")
    common.add_argument("--seed", type=int, default=None, help="global seed (else config, else $FUSELAB_SEED, else 0)")
    common.add_argument("--jobs", type=int, default=1, help="cap on worker threads")
    common.add_argument("--log-level", default="WARNING")

    p = _Parser(prog="fuselab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fuselab {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic campaign")
    s.add_argument("--spec")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("porosity", parents=[common], help="porosity from micrographs")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threshold", type=int)
    s.add_argument("--crop", help="top,right,left,bottom")
    s.add_argument("--blur", type=int)
    s.add_argument("--sigma", type=float)
    s.add_argument("--hist")
    s.set_defaults(func=cmd_porosity)

    def train_opts(s):
        s.add_argument("--n-starts", type=int)
        s.add_argument("--include-rotation", action="store_true")

    s = sub.add_parser("train", parents=[common], help="train the four-stage hierarchy")
    s.add_argument("--cuboids", required=True)
    s.add_argument("--tensile", required=True)
    s.add_argument("--out", required=True)
    train_opts(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("cv", parents=[common], help="k-fold cross-validation of one GP")
    s.add_argument("--data", required=True)
    s.add_argument("--target", choices=sorted(TARGETS))
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--squared", action="store_true", help="report mean squared error instead of its root")
    s.add_argument("--out")
    train_opts(s)
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("sobol", parents=[common], help="Sobol indices of a pipeline stage")
    s.add_argument("--pipeline", required=True)
    s.add_argument("--stage", choices=("h", "ep", "ys", "ef"), required=True)
    s.add_argument("--n", type=int, default=4096)
    s.add_argument("--threshold", type=float, default=0.05)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sobol)

    s = sub.add_parser("corr", parents=[common], help="Pearson matrix of measured properties")
    s.add_argument("--cuboids", required=True)
    s.add_argument("--tensile", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_corr)

    s = sub.add_parser("optimize", parents=[common], help="screen and rank candidate parameters")
    s.add_argument("--pipeline", required=True)
    s.add_argument("--n", type=int, default=10000)
    for key in ("ved-min", "ved-max", "ys-min", "ef-min"):
        s.add_argument(f"--{key}")
    s.add_argument("--sampler", choices=("sobol", "uniform"), default="sobol")
    s.add_argument("--rank", choices=("ys", "ef", "combined"), default="combined")
    s.add_argument("--pick", type=int, default=1)
    s.add_argument("--all", action="store_true", help="write every candidate, not only passes")
    s.add_argument("--out")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("map", parents=[common], help="design map over two parameters")
    s.add_argument("--pipeline", required=True)
    s.add_argument("--free", default="power,speed")
    s.add_argument("--fixed", default="layer_um=20,hatch_um=77")
    s.add_argument("--res", type=int, default=200)
    s.add_argument("--isolines")
    s.add_argument("--out")
    s.set_defaults(func=cmd_map)

    s = sub.add_parser("predict", parents=[common], help="predict strength and ductility")
    s.add_argument("--pipeline", required=True)
    s.add_argument("--params", action="append", required=True, help="power,speed,layer_um,hatch_um,scan_rot")
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"fuselab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_toml(args.config) if args.config else {}
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        args.resolved_seed = resolve_seed(args.seed, cfg)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"fuselab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DomainError) as exc:
        print(f"fuselab: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"fuselab: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FuselabError as exc:
        print(f"fuselab: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
