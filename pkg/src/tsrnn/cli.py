"""Command-line entry point: ``tsrnn {prep,synth,xval,train,gradcheck,report}``.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or validation
error.  Each command resolves its configuration up front and writes it to
``config.json`` in its output directory, which is the only place it writes.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import baseline, data, gradcheck, metrics, sarprep
from .net import save_checkpoint
from .train import MODELS, INPUT_SCALE, TrainConfig, cross_validate, train_fold

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
SEED_ENV = "TSRNN_SEED"
PREP_DEFAULTS = {"window": 7, "floor_db": -30.0, "low_pct": 2.0, "high_pct": 98.0}


class UsageError(ValueError):
    pass


# -- configuration -------------------------------------------------------------

def _merge(base: dict, override: dict, where: str = "$") -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise UsageError(f"unknown config key {where}.{key}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, f"{where}.{key}")
        else:
            out[key] = value
    return out


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return doc


def _resolve_seed(args, doc: dict) -> int | None:
    seed = doc.get("seed")
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    return seed


def resolve_train_config(args) -> tuple[TrainConfig, int | None]:
    """Profile defaults, then the JSON config file, then ``TSRNN_SEED``, then flags."""
    doc = _load_config_file(getattr(args, "config", None))
    doc = {k: v for k, v in doc.items() if k not in ("seed", "prep", "models")}
    base = (TrainConfig.paper() if args.profile == "paper" else TrainConfig.desk()).to_json()
    merged = _merge(base, doc)
    if getattr(args, "epochs", None) is not None:
        merged["epochs"] = args.epochs
    if getattr(args, "trees", None) is not None:
        merged["forest"]["num_trees"] = args.trees
    seed = _resolve_seed(args, _load_config_file(getattr(args, "config", None)))
    if seed is not None:
        merged["shuffle_seed"] = merged["fold_seed"] = seed
        merged["network"]["seed"] = merged["forest"]["seed"] = seed
    try:
        return TrainConfig.from_json(merged), seed
    except TypeError as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _write_outputs(out_dir: Path, files: dict[str, str | bytes]) -> None:
    """Create ``out_dir`` and write every file; nothing is written before this point."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        target = out_dir / name
        if isinstance(content, bytes):
            target.write_bytes(content)
        else:
            target.write_text(content)


def _config_echo(command: str, settings: dict) -> str:
    return json.dumps({"command": command, **settings}, indent=2, sort_keys=True) + "\n"


# -- prep ----------------------------------------------------------------------

def cmd_prep(args) -> int:
    doc = _load_config_file(args.config)
    prep = _merge(PREP_DEFAULTS, doc.get("prep", {}), "$.prep")
    for key in PREP_DEFAULTS:
        flag = getattr(args, key)
        if flag is not None:
            prep[key] = flag
    stack_path, labels_path = Path(args.stack), Path(args.labels)
    for p in (stack_path, labels_path):
        if not p.is_file():
            raise UsageError(f"{p}: no such file")
    stack = sarprep.read_stack(stack_path)
    labels = sarprep.read_labels(labels_path, stack.height, stack.width)

    filtered, report = sarprep.temporal_filter(stack, int(prep["window"]))
    db = sarprep.to_db(filtered.intensities, prep["floor_db"])
    q = sarprep.quantize(db, prep["low_pct"], prep["high_pct"], stack.dates, stack.channels)
    ds, excluded = sarprep.extract_samples(q, labels)

    # Render everything in memory first so a failure leaves no partial outputs.
    files = _render_stack(q)
    files["dataset.csv"] = data.dumps_csv(ds)
    files["filter_report.json"] = json.dumps({
        "window": report.window,
        "passthrough_pixels": report.passthrough_count,
        "quantize_bounds_db": [list(b) for b in q.bounds],
        "samples": len(ds),
        "excluded_incomplete": excluded,
    }, indent=2) + "\n"
    files["config.json"] = _config_echo("prep", {"stack": str(args.stack), "labels": str(args.labels),
                                                 "prep": prep})
    _write_outputs(Path(args.out), files)
    print(f"prep: {len(ds)} samples ({excluded} incomplete excluded) -> {args.out}")
    return EXIT_OK


def _render_stack(q: sarprep.QuantizedStack) -> dict[str, str | bytes]:
    meta = {"width": int(q.values.shape[3]), "height": int(q.values.shape[2]), "dates": list(q.dates),
            "channels": list(q.channels), "dtype": "uint8", "data": "quantized.bin"}
    return {"quantized.json": json.dumps(meta, indent=2) + "\n",
            "quantized.bin": np.ascontiguousarray(q.values, dtype=np.uint8).tobytes(),
            "valid.bin": np.ascontiguousarray(q.valid, dtype=np.uint8).tobytes()}


# -- synth ---------------------------------------------------------------------

def _parse_counts(text: str | None, per_class: int | None, classes) -> dict[int, int]:
    if text is None:
        return {c: per_class if per_class is not None else 1000 for c in classes}
    counts = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        try:
            counts[int(key)] = int(value) if sep else int("x")
        except ValueError:
            raise UsageError(f"bad --counts entry {part!r}; expected CLASS=N") from None
    return counts


def cmd_synth(args) -> int:
    profiles = data.ProfileSet.load(args.profiles) if args.profiles else data.default_profiles()
    counts = _parse_counts(args.counts, args.per_class, sorted(profiles.profiles))
    unknown = sorted(set(counts) - set(profiles.profiles))
    if unknown:
        raise UsageError(f"unknown class(es) in counts: {unknown}; profiles define {sorted(profiles.profiles)}")
    if any(n < 0 for n in counts.values()):
        raise UsageError("counts must be non-negative")
    seed = _resolve_seed(args, _load_config_file(args.config))
    seed = 0 if seed is None else seed
    ds = data.synth_generate(profiles, counts, seed)
    summary = data.format_summary(data.summarize(ds, tuple(sorted(profiles.profiles))))
    files = {
        "dataset.csv": data.dumps_csv(ds),
        "summary.txt": summary,
        "profiles.json": json.dumps(profiles.to_json(), indent=2) + "\n",
        "config.json": _config_echo("synth", {"profiles": args.profiles, "counts": counts, "seed": seed}),
    }
    _write_outputs(Path(args.out), files)
    print(summary, end="")
    return EXIT_OK


# -- xval ----------------------------------------------------------------------

def _models(text: str) -> list[str]:
    models = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in models if m not in MODELS]
    if bad or not models:
        raise UsageError(f"unknown model(s) {bad}; choose from {list(MODELS)}")
    return models


def summary_table(reports: dict[str, dict]) -> tuple[str, str]:
    """Per-model F-measure / Accuracy / Kappa as (csv, aligned text)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "f_measure", "f_weighted", "accuracy", "kappa"])
    lines = [f"{'Model':<10}{'F-measure':>11}{'Accuracy':>10}{'Kappa':>8}"]
    for model, rep in reports.items():
        w.writerow([model, repr(rep["f_macro"]), repr(rep["f_weighted"]), repr(rep["accuracy"]),
                    repr(rep["kappa"])])
        lines.append(f"{model.upper():<10}{rep['f_macro']:>11.3f}{rep['accuracy']:>10.3f}{rep['kappa']:>8.3f}")
    return buf.getvalue(), "\n".join(lines) + "\n"


def f1_table(reports: dict[str, dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    models = list(reports)
    w.writerow(["class", "name"] + models)
    labels = next(iter(reports.values()))["labels"]
    for k, lab in enumerate(labels):
        w.writerow([lab, data.CLASS_NAMES.get(lab, str(lab))]
                   + [repr(reports[m]["f_per_class"][k]) for m in models])
    return buf.getvalue()


def cmd_xval(args) -> int:
    models = _models(args.models)
    cfg, seed = resolve_train_config(args)
    ds = data.load_csv(args.dataset)
    groups = None
    if args.group_by_prefix:
        groups = np.array([sid.split(args.group_by_prefix, 1)[0] for sid in ds.ids])
    files = {"config.json": _config_echo("xval", {
        "dataset": str(args.dataset), "models": models, "profile": args.profile, "seed": seed,
        "group_by_prefix": args.group_by_prefix, "train": cfg.to_json()})}
    reports = {}
    for model in models:
        start = time.perf_counter()
        log = cross_validate(ds, cfg, model, threads=args.threads, groups=groups)
        elapsed = time.perf_counter() - start
        rep = metrics.evaluate(np.searchsorted(ds.classes, log.true_labels),
                               np.searchsorted(ds.classes, log.predictions), len(ds.classes),
                               labels=ds.classes, class_names=data.CLASS_NAMES)
        reports[model] = rep.to_json()
        files[f"{model}_report.json"] = rep.dumps()
        files[f"{model}_report.txt"] = rep.to_text(f"{model} ({cfg.folds}-fold)")
        files[f"{model}_confusion.csv"] = rep.confusion.to_csv()
        files[f"{model}_predictions.csv"] = log.predictions_csv()
        files[f"{model}_run.txt"] = log.report()
        files[f"{model}_timings.json"] = json.dumps({**log.timings(), "total_seconds": elapsed}) + "\n"
        print(f"{model}: macro F1 {rep.f_macro:.4f}  accuracy {rep.accuracy:.4f}  kappa {rep.kappa:.4f}"
              f"  ({elapsed:.1f}s)", flush=True)
    table_csv, table_txt = summary_table(reports)
    files["summary.csv"], files["summary.txt"] = table_csv, table_txt
    files["f1_per_class.csv"] = f1_table(reports)
    _write_outputs(Path(args.out), files)
    print(table_txt, end="")
    return EXIT_OK


# -- train ---------------------------------------------------------------------

def cmd_train(args) -> int:
    if args.model not in MODELS:
        raise UsageError(f"unknown model {args.model!r}; choose from {list(MODELS)}")
    cfg, seed = resolve_train_config(args)
    ds = data.load_csv(args.dataset)
    X, y = ds.X / INPUT_SCALE, ds.class_index()
    out = Path(args.out)
    echo = _config_echo("train", {"dataset": str(args.dataset), "model": args.model,
                                  "profile": args.profile, "seed": seed, "train": cfg.to_json()})
    if args.model in ("lstm", "gru"):
        c = cfg.replace(network=cfg.network.replace(cell_kind=args.model, num_classes=len(ds.classes)))
        fit = train_fold(X, y, c)
        _write_outputs(out, {"config.json": echo,
                             "losses.csv": "epoch,loss\n" + "".join(
                                 f"{e + 1},{v!r}\n" for e, v in enumerate(fit.losses))})
        save_checkpoint(fit.params, out / "model.bin")
        print(f"{args.model}: final epoch loss {fit.losses[-1]:.6f} -> {out / 'model.bin'}")
    elif args.model == "rf":
        forest = baseline.fit_forest(X.reshape(len(X), -1), y, cfg.forest, len(ds.classes), args.threads)
        _write_outputs(out, {"config.json": echo})
        baseline.save_forest(forest, out / "forest.bin")
        print(f"rf: {len(forest.trees)} trees -> {out / 'forest.bin'}")
    else:
        lm = baseline.fit_logistic(X.reshape(len(X), -1), y, len(ds.classes),
                                   cfg.logistic.rate, cfg.logistic.epochs)
        model = {"classes": list(ds.classes), "W": lm.W.tolist(), "b": lm.b.tolist(),
                 "input_scale": INPUT_SCALE}
        _write_outputs(out, {"config.json": echo, "logistic.json": json.dumps(model) + "\n"})
        print(f"logistic: final loss {lm.losses[-1]:.6f} -> {out / 'logistic.json'}")
    return EXIT_OK


# -- gradcheck -----------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    seed = _resolve_seed(args, _load_config_file(args.config))
    seed = 0 if seed is None else seed
    try:
        results = gradcheck.run_suite(args.instances, seed, args.tol, corrupt=args.corrupt)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    failed = [r for r in results if not r.passed]
    worst = max(results, key=lambda r: r.max_rel_err)
    lines = [r.describe() for r in (failed if failed else [])]
    lines.append(f"checks: {len(results)}  failed: {len(failed)}  max rel err: {worst.max_rel_err:.3e} "
                 f"(tolerance {args.tol:g}, step {gradcheck.STEP:g}, floor {gradcheck.ERROR_FLOOR:g})")
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_outputs(Path(args.out), {
            "gradcheck.txt": "\n".join(r.describe() for r in results) + "\n" + lines[-1] + "\n",
            "config.json": _config_echo("gradcheck", {"instances": args.instances, "seed": seed,
                                                      "tol": args.tol, "corrupt": args.corrupt})})
    print(text, end="")
    return EXIT_FAILURE if failed else EXIT_OK


# -- report --------------------------------------------------------------------

def cmd_report(args) -> int:
    run = Path(args.run_dir)
    paths = sorted(run.glob("*_report.json"))
    if not paths:
        raise UsageError(f"{run}: no *_report.json files")
    order = {m: k for k, m in enumerate(MODELS)}
    paths.sort(key=lambda p: order.get(p.name[:-len("_report.json")], len(order)))
    reports = {p.name[:-len("_report.json")]: json.loads(p.read_text()) for p in paths}
    table_csv, table_txt = summary_table(reports)
    if args.out:
        _write_outputs(Path(args.out), {"summary.csv": table_csv, "summary.txt": table_txt,
                                        "f1_per_class.csv": f1_table(reports),
                                        "config.json": _config_echo("report", {"run_dir": str(run)})})
    print(table_txt, end="")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsrnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True, training=False):
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help=f"overrides the config seed and ${SEED_ENV}")
        if training:
            p.add_argument("--profile", choices=("desk", "paper"), default="desk")
            p.add_argument("--threads", type=int, default=1)
            p.add_argument("--epochs", type=int)
            p.add_argument("--trees", type=int, help="random-forest size")

    p = sub.add_parser("prep", help="filter, dB-convert and quantize a stack; extract labelled series")
    p.add_argument("stack", help="stack JSON sidecar")
    p.add_argument("labels", help="raw uint8 label map, 0 = nodata")
    p.add_argument("--window", type=int)
    p.add_argument("--floor-db", dest="floor_db", type=float)
    p.add_argument("--low-pct", dest="low_pct", type=float)
    p.add_argument("--high-pct", dest="high_pct", type=float)
    common(p)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--profiles", help="profile JSON (default: built-in profiles)")
    p.add_argument("--counts", help="CLASS=N[,CLASS=N...]")
    p.add_argument("--per-class", dest="per_class", type=int)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("xval", help="k-fold cross-validation with reports")
    p.add_argument("dataset")
    p.add_argument("--models", default=",".join(MODELS))
    p.add_argument("--group-by-prefix", dest="group_by_prefix",
                   help="fold whole groups: sample ids share a group up to this separator")
    common(p, training=True)
    p.set_defaults(func=cmd_xval)

    p = sub.add_parser("train", help="fit one model on a whole dataset")
    p.add_argument("dataset")
    p.add_argument("--model", default="gru")
    common(p, training=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--corrupt", help=argparse.SUPPRESS)  # fault-injection hook
    common(p, out_required=False)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="re-render summary tables from an xval directory")
    p.add_argument("run_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
