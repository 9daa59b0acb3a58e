"""Command-line entry point.

Subcommands: ``train``, ``multirun``, ``gradcheck``, ``baseline``,
``export-data``. Values come from (highest first) flags, ``--config`` file,
built-in defaults. The config file holds ``key = value`` lines, keys being
flag names without the leading dashes; ``#`` starts a comment.

Exit codes: 0 success, 1 usage error, 2 runtime or numerical error.
"""

import argparse
import csv
import io
import logging
import os
import sys

from .cells import ARCHS, grad_check
from .exceptions import ConfigurationError, NumericalError
from .init import POLICIES
from .numerics import make_rng
from .tasks import (
    TASKS, adding_baseline, build_dataset, copy_baseline, export_dataset,
    mc_adding_baseline, mc_copy_baseline,
)
from .train import MetricsLog, MetricsRecord, TrainConfig, multi_run, run_experiment

CSV_HEADER = ("iteration", "train_loss", "eval_loss", "eval_accuracy", "lr", "wall_time_s")
SUMMARY_HEADER = ("iteration", "metric", "mean", "min", "max")
COMMANDS = ("train", "multirun", "gradcheck", "baseline", "export-data")
GRADCHECK_TOL = 1e-4

logger = logging.getLogger("chrono_rnn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {s}")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {s}")
    return v


# dest -> (flags, kwargs); defaults live in TrainConfig or DEFAULTS below
_OPTIONS = [
    ("task", ("--task",), dict(choices=TASKS)),
    ("warp_mode", ("--warp-mode",), dict(choices=("uniform", "variable"))),
    ("max_warp", ("--max-warp",), dict(type=_positive_int)),
    ("min_warp", ("--min-warp",), dict(type=_positive_int)),
    ("seq_len", ("--seq-len",), dict(type=_positive_int, help="warp/pad sequence length")),
    ("T", ("--T",), dict(type=_positive_int)),
    ("arch", ("--arch",), dict(choices=ARCHS)),
    ("init", ("--init",), dict(choices=POLICIES)),
    ("t_max", ("--t-max",), dict(type=float)),
    ("t_min", ("--t-min",), dict(type=float)),
    ("forget_bias", ("--forget-bias",), dict(type=float)),
    ("hidden", ("--hidden",), dict(type=_positive_int)),
    ("batch", ("--batch",), dict(type=_positive_int)),
    ("lr", ("--lr",), dict(type=float)),
    ("rho", ("--rho",), dict(type=float)),
    ("eps", ("--eps",), dict(type=float)),
    ("patience", ("--patience",), dict(type=_positive_int, help="in batches")),
    ("train_samples", ("--train-samples",), dict(type=_positive_int)),
    ("eval_samples", ("--eval-samples",), dict(type=_positive_int)),
    ("epochs", ("--epochs",), dict(type=_nonneg_int)),
    ("iters", ("--iters",), dict(type=_nonneg_int)),
    ("eval_every", ("--eval-every",), dict(type=_positive_int)),
    ("seed", ("--seed",), dict(type=_nonneg_int)),
    ("runs", ("--runs",), dict(type=_positive_int)),
    ("samples", ("--samples",), dict(type=_positive_int, help="Monte Carlo samples (baseline)")),
    ("out", ("--out",), dict()),
    ("export", ("--export",), dict()),
    ("test_max_warp", ("--test-max-warp",), dict(type=_positive_int)),
    ("test_min_warp", ("--test-min-warp",), dict(type=_positive_int)),
]

DEFAULTS = {"runs": 5, "samples": 100000, "out": None, "export": None}
_DESTS = {dest for dest, _, _ in _OPTIONS}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    for dest, flags, kw in _OPTIONS:
        common.add_argument(*flags, dest=dest, default=argparse.SUPPRESS, **kw)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value file")
    common.add_argument("-v", "--verbose", action="store_true", default=False)

    parser = _Parser(prog="chrono-rnn", description="Recurrent cells on synthetic long-dependency tasks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "train": "train one model, write the metrics CSV",
        "multirun": "train several seeds, write per-seed and summary CSVs",
        "gradcheck": "compare BPTT gradients with finite differences",
        "baseline": "print memoryless baselines and Monte Carlo estimates",
        "export-data": "write generated samples as tab-separated lines",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def read_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.lstrip("-").replace("-", "_")] = value
    return values


def _convert(dest, raw):
    for d, flags, kw in _OPTIONS:
        if d == dest:
            conv = kw.get("type", str)
            try:
                value = conv(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config value for {flags[0]}: {exc}") from None
            if "choices" in kw and value not in kw["choices"]:
                raise UsageError(f"config value for {flags[0]} must be one of {kw['choices']}")
            return value
    raise UsageError(f"unknown config key {dest!r}")


def parse_args(argv=None):
    """Parse ``argv`` into ``(command, options dict, TrainConfig)``.

    Raises :class:`UsageError` for invalid combinations; argparse exits with
    status 1 on malformed flags and 0 on ``--help``.
    """
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    verbose = ns.pop("verbose")
    merged = dict(DEFAULTS)
    explicit = set(ns)
    if "config" in ns:
        path = ns.pop("config")
        try:
            file_values = read_config_file(path)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        for key, raw in file_values.items():
            if key not in _DESTS:
                raise UsageError(f"unknown config key {key!r} in {path}")
            merged[key] = _convert(key, raw)
            explicit.add(key)
    merged.update(ns)
    merged["explicit"] = explicit
    merged["verbose"] = verbose

    cfg_fields = set(TrainConfig.field_names())
    cfg = TrainConfig(**{k: v for k, v in merged.items() if k in cfg_fields})
    if command in ("train", "multirun"):
        try:
            cfg = cfg.resolved()
        except ConfigurationError as exc:
            raise UsageError(str(exc)) from None
    if command == "baseline" and cfg.task not in ("copy", "varcopy", "adding"):
        raise UsageError("baseline needs --task copy, varcopy or adding")
    if command == "export-data" and merged.get("export") is None:
        raise UsageError("export-data needs --export PATH")
    return command, merged, cfg


def format_real(x):
    return f"{float(x):.17g}"


def emit_csv(log, path_or_file):
    """Write a MetricsLog as CSV, 17 significant digits, ``\\n`` line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in log.records:
        w.writerow([r.iteration] + [format_real(getattr(r, k)) for k in CSV_HEADER[1:]])
    _write_text(buf.getvalue(), path_or_file)


def read_csv(path):
    log = MetricsLog()
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        for row in rows:
            log.append(MetricsRecord(int(row[0]), *(float(v) for v in row[1:])))
    return log


def emit_summary_csv(rows, path_or_file):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for it, metric, mean, lo, hi in rows:
        w.writerow([it, metric, format_real(mean), format_real(lo), format_real(hi)])
    _write_text(buf.getvalue(), path_or_file)


def _write_text(text, path_or_file):
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _seed_path(out, seed):
    root, ext = os.path.splitext(out)
    return f"{root}.seed{seed}{ext or '.csv'}"


def _summary_path(out):
    root, ext = os.path.splitext(out)
    return f"{root}.summary{ext or '.csv'}"


def cmd_train(cfg, opts):
    out = opts["out"] or sys.stdout
    try:
        log = run_experiment(cfg)
    except NumericalError as exc:
        partial = getattr(exc, "log", None)
        if partial is not None:
            emit_csv(partial, out)
        raise
    emit_csv(log, out)
    return 0


def cmd_multirun(cfg, opts):
    summary = multi_run(cfg, n_runs=opts["runs"])
    out = opts["out"]
    for seed, log in summary.logs.items():
        if out:
            emit_csv(log, _seed_path(out, seed))
    emit_summary_csv(summary.rows, _summary_path(out) if out else sys.stdout)
    for seed, err in summary.failed.items():
        print(f"seed {seed} failed: {err}", file=sys.stderr)
    return 2 if summary.failed and not summary.logs else 0


def cmd_gradcheck(opts):
    given = lambda key, default: opts[key] if key in opts["explicit"] else default  # noqa: E731
    archs = [opts["arch"]] if "arch" in opts["explicit"] else list(ARCHS)
    n_h = given("hidden", 8)
    seq_len = given("seq_len", 12)
    batch = given("batch", 2)
    seed0 = given("seed", 0)
    runs = given("runs", 1)
    worst_all = 0.0
    for arch in archs:
        worst = max(grad_check(arch, n_h, seq_len, seed0 + k, batch=batch) for k in range(runs))
        worst_all = max(worst_all, worst)
        status = "ok" if worst < GRADCHECK_TOL else "FAIL"
        print(f"{arch}\tmax_rel_err={worst:.3e}\tseeds={runs}\t{status}")
    return 0 if worst_all < GRADCHECK_TOL else 2


def cmd_baseline(cfg, opts):
    n = opts["samples"]
    rng = make_rng(cfg.seed)
    if cfg.task == "adding":
        closed = adding_baseline()
        mc = mc_adding_baseline(cfg.T, n, rng)
        print(f"task=adding T={cfg.T} closed_form={closed:.6f} monte_carlo={mc:.6f} samples={n}")
    else:
        closed = copy_baseline(cfg.T)
        mc = mc_copy_baseline(cfg.T, n, rng)
        print(f"task={cfg.task} T={cfg.T} closed_form={closed:.6f} monte_carlo={mc:.6f} samples={n}")
    return 0


def cmd_export(cfg, opts):
    n = cfg.train_samples or 1000
    spec = cfg.task_spec()
    export_dataset(build_dataset(spec, n, cfg.seed, "train"), opts["export"], n)
    return 0


def main(argv=None):
    try:
        command, merged, cfg = parse_args(argv)
    except UsageError as exc:
        print(f"chrono-rnn: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if merged["verbose"] else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if command == "train":
            return cmd_train(cfg, merged)
        if command == "multirun":
            return cmd_multirun(cfg, merged)
        if command == "gradcheck":
            return cmd_gradcheck(merged)
        if command == "baseline":
            return cmd_baseline(cfg, merged)
        return cmd_export(cfg, merged)
    except ConfigurationError as exc:
        print(f"chrono-rnn: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"chrono-rnn: numerical error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"chrono-rnn: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
