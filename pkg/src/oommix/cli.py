"""Command-line entry point: ``oommix VERB [--config PATH] [--set key=value ...] [--out DIR]``.

Exit status: 0 success, 1 usage or configuration error, 2 runtime failure,
3 gradient check above threshold.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ConfigError, RunConfig, load as load_config
from .corpus import CorpusError, DatasetSplit, load_csv, stratified_split, synthetic_split, write_csv

log = logging.getLogger("oommix")

VERBS = ("train", "eval", "gradcheck", "sweep-layers", "analyze", "synth-data", "emit-plots")
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_GRADCHECK = 0, 1, 2, 3
CONFIG_NAME = "config.cfg"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oommix", description="Out-of-manifold mixup for text classification on a toy transformer.")
    p.add_argument("verb", help="one of: " + ", ".join(VERBS))
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key (repeatable)")
    p.add_argument("--out", help="output (and for eval/analyze, run) directory; default ./run "
                                 "(gradcheck writes a CSV only when given)")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    p.add_argument("--force", action="store_true", help="overwrite existing artifacts")
    return p


# ------------------------------------------------------------------ helpers
def _atomic(path: Path, write) -> None:
    """Run ``write(tmp_path)`` then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, obj) -> None:
    checkpoint.atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _guard(out: Path, names, force: bool) -> None:
    existing = [n for n in names if (out / n).exists()]
    if existing and not force:
        raise UsageError(f"{out} already holds {', '.join(existing)}; pass --force to overwrite")


def load_dataset(cfg: RunConfig) -> DatasetSplit:
    d = cfg.data
    if not d.train:
        s = cfg.synth
        return synthetic_split(s.synth_config(cfg.seed), s.n_train, s.n_valid, s.n_test, cfg.seed)
    for path in (d.train, d.valid, d.test):
        if path and not Path(path).is_file():
            raise ConfigError(f"data file not found: {path}")
    cols = list(d.text_columns) if d.text_columns else None
    read = lambda p: load_csv(p, d.label_column, cols, d.one_based)  # noqa: E731
    train = read(d.train)
    test = read(d.test) if d.test else []
    if d.valid:
        valid = read(d.valid)
        if d.n_train:
            train = stratified_split(train, d.n_train, 0, cfg.seed).train
        return DatasetSplit(train, valid, test)
    n_train = d.n_train or len(train) - d.n_valid
    split = stratified_split(train, n_train, d.n_valid, cfg.seed, test=test)
    return split


def _run_config(run: Path) -> RunConfig:
    path = run / CONFIG_NAME
    if not path.is_file():
        raise ConfigError(f"{run} is not a training run directory (missing {CONFIG_NAME})")
    return load_config(path)


# --------------------------------------------------------------------- verbs
def cmd_train(cfg: RunConfig, out: Path, force: bool) -> int:
    from .trainer import save_model, train, write_run_logs

    _guard(out, ("report.json", "model.ckpt", "metrics.jsonl", "lambda_log.csv"), force)
    dataset = load_dataset(cfg)
    result = train(cfg.train, dataset)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.atomic_write_text(out / CONFIG_NAME, cfg.to_lines())
    write_run_logs(out, result.report)
    save_model(out / "model.ckpt", result)
    report = result.report.summary()
    report["running_l_d"] = result.report.running_l_d()
    report["config"] = cfg.train.to_dict()
    _write_json(out / "report.json", report)
    print(json.dumps({"best_step": report["best_step"], "val_acc": report["best_val_acc"],
                      "test_acc": report["test_acc"]}))
    return EXIT_OK


def cmd_eval(cfg: RunConfig, out: Path, force: bool) -> int:
    from .trainer import encode_split, evaluate, load_model

    _guard(out, ("eval.json",), force)
    run_cfg = _run_config(out)
    ckpt = out / "model.ckpt"
    if not ckpt.is_file():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    model, vocab, tcfg = load_model(ckpt)
    dataset = load_dataset(run_cfg)
    res = {"val_acc": evaluate(model, encode_split(dataset.valid, vocab, tcfg.max_len), tcfg.eval_batch)}
    res["test_acc"] = (evaluate(model, encode_split(dataset.test, vocab, tcfg.max_len), tcfg.eval_batch)
                       if dataset.test else None)
    _write_json(out / "eval.json", res)
    print(json.dumps(res))
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, out: Path, force: bool) -> int:
    from .gradsuite import format_table, run_suite

    g = cfg.gradcheck
    try:
        rows = run_suite(g.instances, cfg.seed, g.eps, list(g.only) or None)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    print(format_table(rows))
    if out is not None:
        _guard(out, ("gradcheck.csv",), force)

        def write(tmp):
            with open(tmp, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["check", "instances", "max_rel_error", "passed"])
                for r in rows:
                    w.writerow([r.name, r.instances, repr(r.max_error), int(r.passed)])

        _atomic(out / "gradcheck.csv", write)
    worst = max(r.max_error for r in rows)
    print(f"max relative error {worst:.3e}")
    return EXIT_OK if all(r.passed for r in rows) else EXIT_GRADCHECK


def cmd_sweep(cfg: RunConfig, out: Path, force: bool) -> int:
    from .analysis.sweep import layer_sweep

    _guard(out, ("sweep.csv",), force)
    s = cfg.sweep
    grid = layer_sweep(cfg.train, load_dataset(cfg), s.m_g, s.m_d, s.seeds, s.allow_equal)
    _atomic(out / "sweep.csv", grid.write_csv)
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, out: Path, force: bool) -> int:
    from .analysis import (EmbeddingDump, LambdaLog, dump_embeddings, isomap, lambda_histogram,
                           median_lambda, pca_variance_coverage, write_histogram_csv, write_projection_csv)
    from .trainer import encode_split, load_model

    a = cfg.analyze
    run = Path(a.run) if a.run else out
    run_cfg = _run_config(run)
    names = ("histogram.csv", "embeddings.csv", "isomap.csv", "analysis.json")
    _guard(out, names, force)
    summary: dict = {}

    lam_path = run / "lambda_log.csv"
    if lam_path.is_file():
        lam = LambdaLog.read_csv(lam_path)
        if len(lam):
            edges, counts = lambda_histogram(lam, a.phases, a.bins)
            _atomic(out / "histogram.csv", lambda p: write_histogram_csv(p, edges, counts))
            summary["median_lambda"] = [median_lambda(lam, k, a.phases) for k in range(a.phases)]
            summary["lambda_violations"] = lam.violations()

    model, vocab, tcfg = load_model(run / "model.ckpt")
    dataset = load_dataset(run_cfg)
    if a.split not in ("train", "valid", "test"):
        raise ConfigError(f"analyze.split must be train, valid or test, got {a.split!r}")
    examples = getattr(dataset, a.split)
    if a.max_points and len(examples) > a.max_points:
        examples = examples[: a.max_points]
    data = encode_split(examples, vocab, tcfg.max_len)
    rng = np.random.default_rng(np.random.SeedSequence([run_cfg.seed, 7]))
    dump: EmbeddingDump = dump_embeddings(model, data.ids, data.mask, data.labels, a.pairs, rng)
    _atomic(out / "embeddings.csv", dump.write_csv)

    actual = np.array([t == "actual" for t in dump.tags])
    summary["pca_coverage"] = pca_variance_coverage(dump.points[actual], a.pca_target)
    iso = isomap(dump.points, a.neighbors, a.out_dim)
    kept_tags = [dump.tags[i] for i in iso.kept]
    _atomic(out / "isomap.csv", lambda p: write_projection_csv(p, iso.coords, kept_tags, dump.classes[iso.kept]))
    summary["isomap"] = {"points": int(len(iso.kept)), "dropped": iso.dropped,
                         "eigenvalues": [float(v) for v in iso.eigenvalues],
                         "max_residual_rel": float(np.max(iso.residuals) / iso.matrix_norm)}
    _write_json(out / "analysis.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_synth(cfg: RunConfig, out: Path, force: bool) -> int:
    _guard(out, ("train.csv", "valid.csv", "test.csv"), force)
    s = cfg.synth
    split = synthetic_split(s.synth_config(cfg.seed), s.n_train, s.n_valid, s.n_test, cfg.seed)
    for name in ("train", "valid", "test"):
        _atomic(out / f"{name}.csv", lambda p, part=getattr(split, name): write_csv(part, p))
    print(json.dumps({k: {str(c): n for c, n in v.items()} for k, v in split.counts().items()}))
    return EXIT_OK


def cmd_plots(cfg: RunConfig, out: Path, force: bool) -> int:
    from .analysis.lambdas import read_histogram_csv
    from .plots import histogram_svg, line_chart_svg, scatter_svg

    src = Path(cfg.plots.run) if cfg.plots.run else out
    made = []

    def emit(name, text):
        _guard(out, (name,), force)
        checkpoint.atomic_write_text(out / name, text)
        made.append(name)

    if (src / "histogram.csv").is_file():
        edges, counts = read_histogram_csv(src / "histogram.csv")
        emit("lambda_histogram.svg", histogram_svg(edges, counts))
    if (src / "sweep.csv").is_file():
        with open(src / "sweep.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        gs = sorted({int(r["m_g"]) for r in rows})
        series = {}
        for d in sorted({int(r["m_d"]) for r in rows}):
            mean = [np.nan] * len(gs)
            std = [np.nan] * len(gs)
            for r in rows:
                if int(r["m_d"]) == d:
                    mean[gs.index(int(r["m_g"]))] = float(r["mean"])
                    std[gs.index(int(r["m_g"]))] = float(r["std"])
            series[f"m_d = {d}"] = (mean, std)
        emit("layer_sweep.svg", line_chart_svg(gs, series))
    if (src / "isomap.csv").is_file():
        with open(src / "isomap.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        tags = [r["tag"] for r in rows]
        classes = [int(r["class"]) for r in rows]
        for plane in cfg.plots.planes:
            if len(plane) != 2 or set(plane) - set("xyz"):
                raise ConfigError(f"projection plane must be two of x, y, z; got {plane!r}")
            xy = [(float(r[plane[0]]), float(r[plane[1]])) for r in rows]
            emit(f"isomap_{plane}.svg", scatter_svg(xy, tags, classes, f"Isomap ({plane[0]}, {plane[1]})",
                                                    plane[0], plane[1]))
    if not made:
        raise ConfigError(f"no histogram.csv, sweep.csv or isomap.csv in {src}")
    print("\n".join(str(out / m) for m in made))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "sweep-layers": cmd_sweep,
    "analyze": cmd_analyze,
    "synth-data": cmd_synth,
    "emit-plots": cmd_plots,
}


def main(argv=None) -> int:
    parser = make_parser()
    logging.basicConfig(level=os.environ.get("OOMMIX_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args = parser.parse_args(argv)
        if args.verb not in COMMANDS:
            parser.print_usage(sys.stderr)
            raise UsageError(f"unknown verb {args.verb!r} (choose from {', '.join(VERBS)})")
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        if args.out:
            out = Path(args.out)
        else:
            out = None if args.verb == "gradcheck" else Path("run")
        return COMMANDS[args.verb](cfg, out, args.force)
    except (UsageError, ConfigError, CorpusError) as err:
        print(f"oommix: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # noqa: BLE001 - reported as a runtime failure
        log.debug("failure", exc_info=True)
        print(f"oommix: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
