"""Seeded generators for the synthetic benchmarks and their memoryless baselines.

Symbol conventions
------------------
* warping / padding tasks: alphabet of 10, symbol 0 is the dummy (and pad)
  symbol, 1..9 are content.
* copy tasks: 0..7 content, 8 dummy, 9 signal.
* adding task: inputs are ``(value, marker)`` pairs, the target is a real.

Every generator is a pure function of its arguments and the state of the
``rng`` it is handed. Datasets derive one stream per sample from
``(seed, stream_name, index)`` so any sample can be regenerated alone.
"""

from dataclasses import dataclass, field, replace
import math
from typing import Optional

import numpy as np

from .cells import Batch
from .exceptions import ConfigurationError
from .numerics import DTYPE, derive_rng

WARP_DUMMY = 0
COPY_DUMMY = 8
COPY_SIGNAL = 9
COPY_ALPHABET = 10
COPY_CONTENT = 8
COPY_LEN = 10

WARP_MODES = ("uniform", "variable", "uniform_pad", "variable_pad")
TASKS = ("warp", "pad", "copy", "varcopy", "adding")


@dataclass
class TaskSample:
    """One sequence.

    ``inputs`` holds symbol indices (L,) or, for the adding task, an (L, 2)
    array of ``(value, marker)``. ``targets`` is (L,) symbols or a float.
    """

    inputs: np.ndarray
    targets: object
    loss_mask: np.ndarray

    def __len__(self):
        return len(self.loss_mask)


@dataclass
class WarpSpec:
    """Time-warping setup.

    Repeat counts (or pad lengths + 1) are drawn from ``min_warp..max_warp``:
    all equal to ``max_warp`` in the uniform modes, uniform on the range in
    the variable ones. ``base_len`` characters are generated (default:
    ``trunc_len``, enough to always reach the truncation length).
    """

    mode: str = "uniform"
    max_warp: int = 1
    trunc_len: int = 500
    base_len: Optional[int] = None
    min_warp: int = 1

    def __post_init__(self):
        if self.mode not in WARP_MODES:
            raise ConfigurationError(f"unknown warp mode {self.mode!r}")
        if self.max_warp < 1 or self.min_warp < 1 or self.min_warp > self.max_warp:
            raise ConfigurationError(
                f"warp range must satisfy 1 <= min_warp <= max_warp, got [{self.min_warp}, {self.max_warp}]"
            )
        if self.trunc_len < 1:
            raise ConfigurationError("trunc_len must be >= 1")

    @property
    def padded(self):
        return self.mode.endswith("_pad")


def _base_sequence(n, alphabet, rng):
    """``n`` content symbols in 1..alphabet-1 with no two neighbours equal."""
    if alphabet < 3:
        raise ConfigurationError("warping tasks need at least two content symbols")
    m = alphabet - 1
    steps = np.concatenate([[rng.integers(0, m)], rng.integers(1, m, size=n - 1)])
    return np.cumsum(steps) % m + 1


def _repeat_counts(spec, n, rng):
    if spec.mode.startswith("uniform"):
        return np.full(n, spec.max_warp, dtype=np.int64)
    return rng.integers(spec.min_warp, spec.max_warp + 1, size=n)


def gen_warped(spec, alphabet=10, rng=None, counts=None):
    """Next-step recall of a random sequence, each character stretched in time.

    Unwarped, the target at step ``t`` is the input at ``t - 1`` (dummy at
    ``t = 0``). Warping repeats each base character, and its target, the same
    number of times; the result is truncated to ``spec.trunc_len``.
    """
    if spec.padded:
        raise ConfigurationError("gen_warped handles uniform/variable modes; use gen_padded")
    n = spec.base_len or spec.trunc_len
    base = _base_sequence(n, alphabet, rng)
    counts = _repeat_counts(spec, n, rng) if counts is None else np.asarray(counts)
    prev = np.concatenate([[WARP_DUMMY], base[:-1]])
    L = spec.trunc_len
    inputs = np.repeat(base, counts)[:L]
    targets = np.repeat(prev, counts)[:L]
    return TaskSample(inputs, targets, np.ones(len(inputs), dtype=np.int8))


def gen_padded(spec, alphabet=10, rng=None, pads=None):
    """Characters separated by runs of the pad symbol.

    Pad runs have length ``max_warp - 1`` (uniform_pad) or are uniform on
    ``min_warp - 1 .. max_warp - 1`` (variable_pad). At a character step the
    target is the previous character; at pad steps it is the dummy.
    """
    if not spec.padded:
        raise ConfigurationError("gen_padded handles the *_pad modes")
    n = spec.base_len or spec.trunc_len
    base = _base_sequence(n, alphabet, rng)
    pads = _repeat_counts(spec, n, rng) - 1 if pads is None else np.asarray(pads)
    starts = np.concatenate([[0], np.cumsum(pads + 1)[:-1]])
    total = int(starts[-1] + pads[-1] + 1)
    inputs = np.full(total, WARP_DUMMY, dtype=np.int64)
    targets = np.full(total, WARP_DUMMY, dtype=np.int64)
    inputs[starts] = base
    targets[starts] = np.concatenate([[WARP_DUMMY], base[:-1]])
    L = spec.trunc_len
    return TaskSample(inputs[:L], targets[:L], np.ones(min(L, total), dtype=np.int8))


def gen_copy(T, rng):
    """Copy task of length ``T + 20``: remember 10 symbols for ``T`` steps."""
    if T < 1:
        raise ConfigurationError(f"copy task needs T >= 1, got {T}")
    return _copy_layout(T, T, rng)


def gen_variable_copy(T, rng, gap=None):
    """Copy task where the signal comes ``gap`` steps after the last content symbol.

    ``gap`` is uniform on ``1..T`` (``gap == T`` is exactly the fixed copy
    layout). The answer starts right after the signal; the sequence is
    padded with dummies to the constant length ``T + 20``.
    """
    if T < 1:
        raise ConfigurationError(f"copy task needs T >= 1, got {T}")
    if gap is None:
        gap = int(rng.integers(1, T + 1))
    elif not 1 <= gap <= T:
        raise ConfigurationError(f"gap must be in 1..{T}, got {gap}")
    return _copy_layout(T, gap, rng)


def _copy_layout(T, gap, rng):
    L = T + 20
    content = rng.integers(0, COPY_CONTENT, size=COPY_LEN)
    inputs = np.full(L, COPY_DUMMY, dtype=np.int64)
    inputs[:COPY_LEN] = content
    signal = COPY_LEN - 1 + gap
    inputs[signal] = COPY_SIGNAL
    targets = np.full(L, COPY_DUMMY, dtype=np.int64)
    targets[signal + 1:signal + 1 + COPY_LEN] = content
    return TaskSample(inputs, targets, np.ones(L, dtype=np.int8))


def gen_adding(T, rng):
    """Adding task: sum of the two marked values, one marker in each half."""
    if T < 2:
        raise ConfigurationError(f"adding task needs T >= 2, got {T}")
    half = math.ceil(T / 2)
    values = rng.random(T)
    first = int(rng.integers(0, half))
    second = int(rng.integers(half, T))
    markers = np.zeros(T)
    markers[[first, second]] = 1.0
    mask = np.zeros(T, dtype=np.int8)
    mask[-1] = 1
    return TaskSample(np.stack([values, markers], axis=1), float(values[first] + values[second]), mask)


def copy_baseline(T):
    """Memoryless cross-entropy on the copy task, averaged over all ``T + 20`` steps."""
    if T < 1:
        raise ConfigurationError(f"copy task needs T >= 1, got {T}")
    return COPY_LEN * math.log(COPY_CONTENT) / (T + 20)


def adding_baseline():
    """MSE of always predicting 1: the variance of the sum of two U[0, 1] draws."""
    return 1.0 / 6.0


# -- Monte Carlo checks of the baselines ----------------------------------

def mc_copy_baseline(T, n_samples, rng, chunk=20000):
    """Plug-in estimate of the best memoryless copy-task loss.

    Samples ``n_samples`` target sequences, tabulates the marginal symbol
    distribution at each position, and returns the entropy of those
    marginals averaged over positions. A predictor that ignores its inputs
    can do no better than the per-position marginal, so this estimates the
    memoryless optimum without assuming its value.
    """
    L = T + 20
    counts = np.zeros((L, COPY_ALPHABET), dtype=np.int64)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        targets = np.full((m, L), COPY_DUMMY, dtype=np.int64)
        targets[:, T + 10:] = rng.integers(0, COPY_CONTENT, size=(m, COPY_LEN))
        for pos in range(L):
            counts[pos] += np.bincount(targets[:, pos], minlength=COPY_ALPHABET)
        done += m
    p = counts / n_samples
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
    return float(h.mean())


def mc_adding_baseline(T, n_samples, rng, predictor=1.0, chunk=100000):
    """Empirical MSE of a constant predictor on freshly drawn adding samples."""
    half = math.ceil(T / 2)
    total, done = 0.0, 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        values = rng.random((m, T))
        first = rng.integers(0, half, size=m)
        second = rng.integers(half, T, size=m)
        rows = np.arange(m)
        target = values[rows, first] + values[rows, second]
        total += float(((target - predictor) ** 2).sum())
        done += m
    return total / n_samples


# -- task specs and datasets ----------------------------------------------

@dataclass
class TaskSpec:
    """Which benchmark to draw from: ``kind`` in warp, pad, copy, varcopy, adding."""

    kind: str = "warp"
    T: int = 100
    warp: WarpSpec = field(default_factory=WarpSpec)
    alphabet: int = 10

    def __post_init__(self):
        if self.kind not in TASKS:
            raise ConfigurationError(f"unknown task {self.kind!r}; expected one of {TASKS}")
        if self.kind == "warp" and self.warp.padded:
            raise ConfigurationError("task 'warp' needs a uniform/variable warp mode")
        if self.kind == "pad" and not self.warp.padded:
            raise ConfigurationError("task 'pad' needs a *_pad warp mode")
        if self.kind in ("copy", "varcopy") and self.T < 1:
            raise ConfigurationError("copy tasks need T >= 1")
        if self.kind == "adding" and self.T < 2:
            raise ConfigurationError("adding task needs T >= 2")

    @property
    def regression(self):
        return self.kind == "adding"

    @property
    def n_in(self):
        return 2 if self.regression else self.n_symbols

    @property
    def n_symbols(self):
        return COPY_ALPHABET if self.kind in ("copy", "varcopy") else self.alphabet

    @property
    def n_out(self):
        return 1 if self.regression else self.n_symbols

    def with_warp(self, **changes):
        return replace(self, warp=replace(self.warp, **changes))

    def sample(self, rng):
        if self.kind == "warp":
            return gen_warped(self.warp, self.alphabet, rng)
        if self.kind == "pad":
            return gen_padded(self.warp, self.alphabet, rng)
        if self.kind == "copy":
            return gen_copy(self.T, rng)
        if self.kind == "varcopy":
            return gen_variable_copy(self.T, rng)
        return gen_adding(self.T, rng)


def collate(samples, n_symbols=None):
    """Stack samples into a time-major :class:`~chrono_rnn.cells.Batch`.

    Symbol inputs are one-hot encoded over ``n_symbols``.
    """
    first = samples[0].inputs
    if first.ndim == 2:
        inputs = np.stack([s.inputs for s in samples], axis=1).astype(DTYPE)
        targets = np.array([s.targets for s in samples], dtype=DTYPE)
    else:
        sym = np.stack([s.inputs for s in samples], axis=1)
        inputs = np.eye(n_symbols, dtype=DTYPE)[sym]
        targets = np.stack([s.targets for s in samples], axis=1)
    mask = np.stack([s.loss_mask for s in samples], axis=1).astype(DTYPE)
    return Batch(inputs, targets, mask)


class SequenceDataset:
    """Lazily generated dataset; sample ``i`` is a pure function of ``(seed, stream, i)``.

    ``n_samples=None`` gives an unbounded stream (fresh data every batch).
    """

    def __init__(self, task, n_samples, seed, stream="train"):
        if n_samples is not None and n_samples < 1:
            raise ConfigurationError("a dataset needs at least one sample")
        self.task = task
        self.n_samples = n_samples
        self.seed = seed
        self.stream = stream
        self._batches = {}

    def __len__(self):
        if self.n_samples is None:
            raise TypeError("unbounded stream has no length")
        return self.n_samples

    def __getitem__(self, i):
        if i < 0 or (self.n_samples is not None and i >= self.n_samples):
            raise IndexError(i)
        return self.task.sample(derive_rng(self.seed, self.stream, i))

    def batch(self, indices):
        return collate([self[int(i)] for i in indices], self.task.n_symbols)

    def fixed_batches(self, batch_size, n=None):
        """The first ``n`` samples in consecutive batches, collated once and cached."""
        n = len(self) if n is None else n
        key = (batch_size, n)
        if key not in self._batches:
            self._batches[key] = [
                self.batch(range(s, min(s + batch_size, n))) for s in range(0, n, batch_size)
            ]
        return self._batches[key]


def build_dataset(task, n_samples, seed, stream="train"):
    return SequenceDataset(task, n_samples, seed, stream)


def format_sample(sample):
    """One tab-separated export line (no trailing newline)."""
    if sample.inputs.ndim == 2:
        values = " ".join(f"{v:.17g}" for v in sample.inputs[:, 0])
        markers = " ".join(str(int(m)) for m in sample.inputs[:, 1])
        return f"{values}\t{markers}\t{sample.targets:.17g}"
    ints = lambda a: " ".join(str(int(v)) for v in a)  # noqa: E731
    return f"{ints(sample.inputs)}\t{ints(sample.targets)}\t{ints(sample.loss_mask)}"


def parse_sample(line):
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 3:
        raise ValueError(f"expected 3 tab-separated fields, got {len(fields)}")
    a, b, c = fields
    if "." in a or "e" in a:
        values = np.array([float(v) for v in a.split()])
        markers = np.array([float(v) for v in b.split()])
        mask = np.zeros(len(values), dtype=np.int8)
        mask[-1] = 1
        return TaskSample(np.stack([values, markers], axis=1), float(c), mask)
    to_int = lambda s: np.array([int(v) for v in s.split()], dtype=np.int64)  # noqa: E731
    return TaskSample(to_int(a), to_int(b), to_int(c).astype(np.int8))


def export_dataset(dataset, path, n=None):
    n = len(dataset) if n is None else n
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(n):
            fh.write(format_sample(dataset[i]) + "\n")
