"""Experiment execution: model + init + optimizer from a config, training, metrics."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
import logging
import math
import time
from typing import List, Optional

import numpy as np

from .cells import RecurrentModel, sequence_backward, sequence_forward
from .exceptions import ConfigurationError, NumericalError
from .init import InitPolicy
from .numerics import derive_rng
from .optim import LrSchedule, RMSProp
from .tasks import TaskSpec, WarpSpec, build_dataset

logger = logging.getLogger(__name__)

METRIC_FIELDS = ("train_loss", "eval_loss", "eval_accuracy", "lr")
EVAL_BATCH = 250


@dataclass
class TrainConfig:
    """Full description of one training run.

    ``None`` fields take task-dependent defaults in :meth:`resolved`:
    64 hidden units / batch 32 / LR halving for the warping and padding
    tasks, 128 units / batch 50 / constant LR for copy and adding.
    ``patience`` is in batches and is converted to evaluation points using
    ``eval_every``.
    """

    task: str = "warp"
    warp_mode: str = "uniform"
    max_warp: int = 1
    min_warp: int = 1
    seq_len: int = 500
    T: int = 100
    alphabet: int = 10
    arch: str = "gated"
    hidden: Optional[int] = None
    init: str = "default"
    t_max: Optional[float] = None
    t_min: Optional[float] = None
    forget_bias: float = 1.0
    batch: Optional[int] = None
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    patience: int = 100
    lr_schedule: Optional[bool] = None
    train_samples: Optional[int] = None
    eval_samples: Optional[int] = None
    epochs: Optional[int] = None
    iters: Optional[int] = None
    eval_every: int = 100
    seed: int = 0
    test_max_warp: Optional[int] = None
    test_min_warp: Optional[int] = None

    @property
    def warping(self):
        return self.task in ("warp", "pad")

    def resolved(self):
        """Copy with every task-dependent default filled in, validated."""
        c = replace(self)
        if c.hidden is None:
            c.hidden = 64 if c.warping else 128
        if c.batch is None:
            c.batch = 32 if c.warping else 50
        if c.lr_schedule is None:
            c.lr_schedule = c.warping
        if c.eval_samples is None:
            c.eval_samples = 10000 if c.warping else 1000
        if c.warping and c.train_samples is None:
            c.train_samples = 50000
        if c.epochs is None and c.iters is None:
            if c.train_samples is not None:
                c.epochs = 3
            else:
                c.iters = 10000
        if c.t_max is None and c.init == "chrono":
            c.t_max = {"copy": 1.5 * c.T, "varcopy": float(c.T), "adding": float(c.T)}.get(
                c.task, float(2 * c.max_warp)
            )
        c.validate()
        return c

    def validate(self):
        counts = {
            "hidden": self.hidden, "batch": self.batch, "eval_samples": self.eval_samples,
            "eval_every": self.eval_every, "patience": self.patience, "seq_len": self.seq_len,
            "max_warp": self.max_warp, "min_warp": self.min_warp,
        }
        for name, v in counts.items():
            if v is not None and v < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {v}")
        if self.train_samples is not None and self.train_samples < 1:
            raise ConfigurationError("train_samples must be >= 1")
        if self.epochs is not None and self.iters is not None:
            raise ConfigurationError("give either epochs or iters, not both")
        if self.epochs is not None and self.epochs < 0 or self.iters is not None and self.iters < 0:
            raise ConfigurationError("epochs/iters must be >= 0")
        if self.epochs is not None and self.train_samples is None:
            raise ConfigurationError("epochs need a finite train_samples")
        if self.train_samples is not None and self.batch is not None and self.batch > self.train_samples:
            raise ConfigurationError("batch larger than the training set")
        if self.test_max_warp is not None and not self.warping:
            raise ConfigurationError("test_max_warp only applies to warp/pad tasks")
        self.task_spec()
        self.init_policy().validate(self.arch)
        return self

    def task_spec(self, test=False):
        mode = self.warp_mode if self.task == "warp" else f"{self.warp_mode}_pad"
        lo, hi = self.min_warp, self.max_warp
        if test and self.test_max_warp is not None:
            hi = self.test_max_warp
            lo = self.test_min_warp if self.test_min_warp is not None else min(self.min_warp, hi)
        warp = WarpSpec(mode=mode, max_warp=hi, min_warp=lo, trunc_len=self.seq_len)
        return TaskSpec(kind=self.task, T=self.T, warp=warp, alphabet=self.alphabet)

    def init_policy(self):
        return InitPolicy(kind=self.init, t_max=self.t_max, t_min=self.t_min,
                          forget_bias=self.forget_bias)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class MetricsRecord:
    iteration: int
    train_loss: float
    eval_loss: float
    eval_accuracy: float
    lr: float
    wall_time_s: float


@dataclass
class MetricsLog:
    records: List[MetricsRecord] = field(default_factory=list)
    error: Optional[str] = None

    def append(self, rec):
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValueError("iterations must be strictly increasing")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def same_metrics(self, other):
        """Equality ignoring wall-clock times."""
        key = lambda log: [(r.iteration,) + tuple(getattr(r, m) for m in METRIC_FIELDS)  # noqa: E731
                           for r in log.records]
        return key(self) == key(other) and self.error == other.error

    def first_iteration_below(self, threshold, metric="eval_loss"):
        for r in self.records:
            if getattr(r, metric) < threshold:
                return r.iteration
        return None


class TrainingAborted(NumericalError):
    def __init__(self, message, iteration, log, model=None):
        super().__init__(message, iteration)
        self.log = log
        self.model = model


def evaluate(model, dataset, n=None, batch_size=EVAL_BATCH):
    """Mean loss and accuracy of ``model`` on the first ``n`` samples.

    Loss is the per-sample masked mean averaged over samples (MSE for the
    adding task). Accuracy pools all masked steps; it is -1 for regression.
    Parameters are only read.
    """
    n = len(dataset) if n is None else n
    if n > len(dataset):
        raise ConfigurationError(f"asked for {n} samples from a dataset of {len(dataset)}")
    loss_sum, correct, total = 0.0, 0.0, 0.0
    for batch in dataset.fixed_batches(batch_size, n):
        loss, tape = sequence_forward(model, batch)
        loss_sum += float(tape.per_sample_loss.sum())
        if model.output == "classify":
            pred = tape.outputs.argmax(axis=-1)
            correct += float(((pred == batch.targets) * batch.mask).sum())
            total += float(batch.mask.sum())
    accuracy = correct / total if model.output == "classify" else -1.0
    return loss_sum / n, accuracy


def build_model(cfg):
    """Freshly initialized model for a resolved config."""
    task = cfg.task_spec()
    output = "last" if task.regression else "classify"
    model = RecurrentModel.create(cfg.arch, task.n_in, cfg.hidden, task.n_out,
                                  rng=derive_rng(cfg.seed, "weights"), output=output)
    cell = cfg.init_policy().apply(cfg.arch, model.cell_params, derive_rng(cfg.seed, "init"))
    model.params.update(cell)
    return model


def _batch_indices(cfg, n_iter):
    """Yield the sample indices of each training batch."""
    B = cfg.batch
    if cfg.train_samples is None:
        for it in range(n_iter):
            yield np.arange(it * B, (it + 1) * B)
        return
    per_epoch = cfg.train_samples // B
    shuffle = derive_rng(cfg.seed, "shuffle")
    done = 0
    while done < n_iter:
        order = shuffle.permutation(cfg.train_samples)
        for k in range(per_epoch):
            if done == n_iter:
                return
            yield order[k * B:(k + 1) * B]
            done += 1


def n_iterations(cfg):
    if cfg.iters is not None:
        return cfg.iters
    return cfg.epochs * (cfg.train_samples // cfg.batch)


def fit_model(model, next_batch, n_iter, eval_fn, opt, schedule=None, eval_every=100,
              log=None, on_record=None, monitor_fn=None):
    """Core loop shared by the experiment harness and the estimators.

    ``next_batch(it)`` returns the batch for iteration ``it`` (1-based),
    ``eval_fn(model)`` returns ``(loss, accuracy)``. An evaluation record is
    written at iteration 0, every ``eval_every`` iterations and at the end.
    The LR schedule follows the evaluation loss, or ``monitor_fn(model)[0]``
    when given.
    """
    log = MetricsLog() if log is None else log
    start = time.monotonic()
    window = []

    def record(it, train_loss):
        eval_loss, acc = eval_fn(model)
        if not math.isfinite(eval_loss):
            log.error = f"non-finite evaluation loss at iteration {it}"
            raise TrainingAborted(f"non-finite evaluation loss at iteration {it}", it, log, model)
        rec = MetricsRecord(it, train_loss, eval_loss, acc, opt.lr, time.monotonic() - start)
        log.append(rec)
        if on_record is not None:
            on_record(rec)
        if schedule is not None and it > 0:
            schedule.update(eval_loss if monitor_fn is None else monitor_fn(model)[0], opt)

    # iteration-0 train loss: the first training batch under the initial parameters
    first = sequence_forward(model, next_batch(1))[0] if n_iter else eval_fn(model)[0]
    record(0, first)
    for it in range(1, n_iter + 1):
        batch = next_batch(it)
        loss, tape = sequence_forward(model, batch)
        if not math.isfinite(loss):
            log.error = f"non-finite training loss at iteration {it}"
            raise TrainingAborted(log.error, it, log, model)
        grads = sequence_backward(model, tape)
        try:
            opt.step(model.params, grads, iteration=it)
        except NumericalError as exc:
            log.error = f"{exc} at iteration {it}"
            raise TrainingAborted(log.error, it, log, model) from exc
        window.append(loss)
        if it % eval_every == 0 or it == n_iter:
            record(it, float(np.mean(window)))
            window = []
    return log


def train_model(cfg, on_record=None):
    """Train per ``cfg`` and return ``(model, log)``; deterministic given the seed."""
    cfg = cfg.resolved()
    model = build_model(cfg)
    train_ds = build_dataset(cfg.task_spec(), cfg.train_samples, cfg.seed, "train")
    eval_ds = build_dataset(cfg.task_spec(test=True), cfg.eval_samples, cfg.seed, "eval")
    n_iter = n_iterations(cfg)
    batches = _batch_indices(cfg, n_iter)

    current = {}

    def next_batch(it):
        # fit_model peeks at iteration 1 before training starts
        if it not in current:
            current.clear()
            current[it] = train_ds.batch(next(batches))
        return current[it]

    opt = RMSProp(cfg.lr, cfg.rho, cfg.eps)
    schedule = None
    if cfg.lr_schedule:
        schedule = LrSchedule(patience=max(1, math.ceil(cfg.patience / cfg.eval_every)))
    monitor = None
    if schedule is not None and cfg.test_max_warp is not None:
        # off-range test set: drive the schedule from held-out training-range data
        valid_ds = build_dataset(cfg.task_spec(), cfg.eval_samples, cfg.seed, "valid")
        monitor = lambda m: evaluate(m, valid_ds)  # noqa: E731
    logger.info("training %s on %s for %d iterations", cfg.arch, cfg.task, n_iter)
    log = fit_model(model, next_batch, n_iter, lambda m: evaluate(m, eval_ds), opt,
                    schedule, cfg.eval_every, on_record=on_record, monitor_fn=monitor)
    return model, log


def run_experiment(cfg, on_record=None):
    """Train per ``cfg`` and return its :class:`MetricsLog`."""
    return train_model(cfg, on_record=on_record)[1]


@dataclass
class MultiRunSummary:
    seeds: List[int]
    logs: dict
    failed: dict
    rows: list  # (iteration, metric, mean, min, max)

    def curve(self, metric, stat="mean"):
        col = {"mean": 2, "min": 3, "max": 4}[stat]
        pts = [(r[0], r[col]) for r in self.rows if r[1] == metric]
        return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])


def _run_one(cfg):
    try:
        return cfg.seed, run_experiment(cfg), None
    except NumericalError as exc:
        return cfg.seed, getattr(exc, "log", None), str(exc)


def aggregate(logs):
    """Per-iteration mean/min/max of every metric across logs, on shared iterations."""
    if not logs:
        return []
    shared = set.intersection(*[{r.iteration for r in log.records} for log in logs])
    rows = []
    for it in sorted(shared):
        recs = [next(r for r in log.records if r.iteration == it) for log in logs]
        for metric in METRIC_FIELDS:
            vals = np.array([getattr(r, metric) for r in recs])
            rows.append((it, metric, float(vals.mean()), float(vals.min()), float(vals.max())))
    return rows


def multi_run(cfg, n_runs=5, seeds=None, n_jobs=1):
    """Run ``cfg`` under several seeds and aggregate the curves.

    Seeds default to ``cfg.seed, cfg.seed + 1, ...``. Runs that abort are
    listed in ``failed`` and left out of the aggregate.
    """
    if seeds is None:
        seeds = [cfg.seed + k for k in range(n_runs)]
    seeds = list(seeds)
    if len(seeds) < 1:
        raise ConfigurationError("multi_run needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigurationError(f"seeds must be distinct, got {seeds}")
    cfgs = [replace(cfg, seed=s) for s in seeds]
    for c in cfgs:
        c.resolved()
    if n_jobs == 1:
        results = [_run_one(c) for c in cfgs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_one, cfgs))
    logs, failed = {}, {}
    for seed, log, err in results:
        if err is None:
            logs[seed] = log
        else:
            failed[seed] = err
    return MultiRunSummary(seeds, logs, failed, aggregate(list(logs.values())))
