import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from chrono_rnn.exceptions import ConfigurationError
from chrono_rnn.numerics import make_rng
from chrono_rnn.tasks import (
    COPY_DUMMY, COPY_SIGNAL, TaskSpec, WarpSpec, adding_baseline, build_dataset,
    copy_baseline, export_dataset, format_sample, gen_adding, gen_copy, gen_padded,
    gen_variable_copy, gen_warped, mc_adding_baseline, mc_copy_baseline, parse_sample,
)


def runs(a):
    """Run-length encoding: (values, lengths)."""
    groups = [(k, len(list(g))) for k, g in itertools.groupby(a.tolist())]
    return [k for k, _ in groups], [n for _, n in groups]


# -- warping --------------------------------------------------------------

@pytest.mark.parametrize("mode", ["uniform", "variable"])
def test_warp_one_is_next_step_recall(mode):
    s = gen_warped(WarpSpec(mode, max_warp=1, trunc_len=40), rng=make_rng(0))
    assert s.targets[0] == 0
    assert np.array_equal(s.targets[1:], s.inputs[:-1])
    assert np.all(np.diff(s.inputs) != 0) and s.inputs.min() >= 1 and s.inputs.max() <= 9
    assert np.all(s.loss_mask == 1)


def test_uniform_warp_repeats_exactly():
    s = gen_warped(WarpSpec("uniform", max_warp=4, trunc_len=200), rng=make_rng(1))
    vals, lens = runs(s.inputs)
    assert all(n == 4 for n in lens)
    t_vals, t_lens = runs(s.targets)
    assert all(n == 4 for n in t_lens)
    assert t_vals == [0] + vals[:-1]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2 ** 31))
def test_warp_collapses_to_unwarped(max_warp, seed):
    n = 120
    counts = make_rng(seed + 1).integers(1, max_warp + 1, size=n)
    s = gen_warped(WarpSpec("variable", max_warp=max_warp, trunc_len=n), rng=make_rng(seed), counts=counts)
    plain = gen_warped(WarpSpec("variable", max_warp=1, trunc_len=n), rng=make_rng(seed), counts=np.ones(n, int))
    vals, lens = runs(s.inputs)
    k = len(vals)
    assert len(s.inputs) == n
    assert vals == plain.inputs[:k].tolist()
    assert lens[:-1] == counts[:k - 1].tolist() and 1 <= lens[-1] <= counts[k - 1]
    t_vals, t_lens = runs(s.targets)
    assert t_vals == plain.targets[:k].tolist() and t_lens == lens


def test_variable_warp_counts_in_range():
    spec = WarpSpec("variable", max_warp=5, trunc_len=500)
    s = gen_warped(spec, rng=make_rng(2))
    _, lens = runs(s.inputs)
    assert min(lens) >= 1 and max(lens[:-1]) <= 5 and len(set(lens)) > 1


def test_warp_min_range():
    s = gen_warped(WarpSpec("variable", max_warp=40, min_warp=20, trunc_len=400), rng=make_rng(3))
    _, lens = runs(s.inputs)
    assert all(20 <= n <= 40 for n in lens[:-1])


# -- padding --------------------------------------------------------------

def test_pad_zero_equals_unwarped():
    a = gen_padded(WarpSpec("uniform_pad", max_warp=1, trunc_len=50), rng=make_rng(4))
    b = gen_warped(WarpSpec("uniform", max_warp=1, trunc_len=50), rng=make_rng(4))
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.targets, b.targets)


def test_fixed_pad_three():
    s = gen_padded(WarpSpec("uniform_pad", max_warp=4, trunc_len=200), rng=make_rng(5))
    nz = np.flatnonzero(s.inputs)
    assert np.all(np.diff(nz) == 4)
    assert nz[0] == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2 ** 31), st.sampled_from(["uniform_pad", "variable_pad"]))
def test_pad_targets_are_previous_nonzero(max_warp, seed, mode):
    s = gen_padded(WarpSpec(mode, max_warp=max_warp, trunc_len=150), rng=make_rng(seed))
    last = 0
    for x, y in zip(s.inputs, s.targets):
        if x != 0:
            assert y == last
            last = x
        else:
            assert y == 0
    nz = np.flatnonzero(s.inputs)
    assert np.all(np.diff(nz) >= 1) and np.all(np.diff(nz) <= max_warp)


# -- copy -----------------------------------------------------------------

def test_copy_smallest_T():
    s = gen_copy(1, make_rng(0))
    assert len(s.inputs) == 21
    assert s.inputs[10] == COPY_SIGNAL
    assert np.all(s.inputs[11:] == COPY_DUMMY) and np.all(s.inputs[:10] < 8)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2 ** 31))
def test_copy_structure(T, seed):
    s = gen_copy(T, make_rng(seed))
    assert len(s.inputs) == len(s.targets) == len(s.loss_mask) == T + 20
    assert (s.inputs < 8).sum() == 10 and (s.inputs == COPY_SIGNAL).sum() == 1
    assert (s.inputs == COPY_DUMMY).sum() == T + 9
    assert s.inputs[T + 9] == COPY_SIGNAL
    assert np.all(s.targets[:T + 10] == COPY_DUMMY)
    assert np.array_equal(s.targets[T + 10:], s.inputs[:10])
    assert sorted(s.targets[s.targets < 8]) == sorted(s.inputs[:10])


def test_copy_rejects_T0():
    with pytest.raises(ConfigurationError):
        gen_copy(0, make_rng(0))


def test_variable_copy_full_gap_matches_copy():
    a = gen_variable_copy(37, make_rng(6), gap=37)
    b = gen_copy(37, make_rng(6))
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.targets, b.targets)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2 ** 31))
def test_variable_copy_structure(T, seed):
    s = gen_variable_copy(T, make_rng(seed))
    assert len(s.inputs) == T + 20
    sig = int(np.flatnonzero(s.inputs == COPY_SIGNAL)[0])
    assert 10 <= sig <= T + 9
    assert np.array_equal(s.targets[sig + 1:sig + 11], s.inputs[:10])
    assert np.all(np.delete(s.targets, np.arange(sig + 1, sig + 11)) == COPY_DUMMY)


def test_variable_copy_gap_distribution():
    T, n = 100, 10 ** 4
    rng = make_rng(7)
    gaps = [int(np.flatnonzero(gen_variable_copy(T, rng).inputs == COPY_SIGNAL)[0]) - 9 for _ in range(n)]
    counts = np.bincount(gaps, minlength=T + 1)[1:]
    assert counts.sum() == n and np.all(counts > 0)
    assert stats.chisquare(counts).pvalue > 1e-3


# -- adding ---------------------------------------------------------------

def test_adding_T2():
    s = gen_adding(2, make_rng(0))
    assert np.array_equal(s.inputs[:, 1], [1.0, 1.0])
    assert s.targets == pytest.approx(s.inputs[0, 0] + s.inputs[1, 0], abs=0)
    assert s.loss_mask.tolist() == [0, 1]


def test_adding_hand_arithmetic():
    assert 0.2 + 0.7 == pytest.approx(0.9, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 301), st.integers(0, 2 ** 31))
def test_adding_markers(T, seed):
    s = gen_adding(T, make_rng(seed))
    marks = np.flatnonzero(s.inputs[:, 1])
    half = math.ceil(T / 2)
    assert len(marks) == 2 and marks[0] < half <= marks[1]
    assert s.inputs[:, 1].sum() == 2
    assert s.targets == s.inputs[marks[0], 0] + s.inputs[marks[1], 0]
    assert 0 <= s.targets <= 2


def test_adding_rejects_short():
    with pytest.raises(ConfigurationError):
        gen_adding(1, make_rng(0))


# -- baselines ------------------------------------------------------------

def test_copy_baseline_values():
    assert copy_baseline(500) == pytest.approx(20.79442 / 520, abs=1e-7)
    assert copy_baseline(500) == pytest.approx(0.039989, abs=1e-6)
    assert copy_baseline(100) == pytest.approx(0.173287, abs=1e-6)
    assert copy_baseline(2000) == pytest.approx(0.010294, abs=1e-6)
    vals = [copy_baseline(T) for T in (1, 10, 100, 1000, 10 ** 6)]
    assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-4


def test_adding_baseline_value():
    assert adding_baseline() == pytest.approx(2 / 12, abs=1e-16)
    assert round(adding_baseline(), 3) == 0.167


def test_mc_baselines_small():
    assert mc_copy_baseline(50, 50000, make_rng(0)) == pytest.approx(copy_baseline(50), rel=0.01)
    assert mc_adding_baseline(50, 10 ** 5, make_rng(1)) == pytest.approx(adding_baseline(), rel=0.01)


# -- datasets -------------------------------------------------------------

def test_dataset_deterministic():
    spec = TaskSpec("warp", warp=WarpSpec("variable", 3, trunc_len=30))
    a, b = build_dataset(spec, 5, seed=3), build_dataset(spec, 5, seed=3)
    for i in range(5):
        assert np.array_equal(a[i].inputs, b[i].inputs)
    assert not np.array_equal(a[0].inputs, a[1].inputs)
    single = build_dataset(spec, 1, seed=3)
    assert len(single) == 1 and np.array_equal(single[0].inputs, a[0].inputs)
    with pytest.raises(IndexError):
        single[1]


def test_dataset_generation_speed():
    spec = TaskSpec("warp", warp=WarpSpec("variable", 4, trunc_len=500))
    ds = build_dataset(spec, 5000, seed=0)
    start = time.perf_counter()
    for i in range(len(ds)):
        ds[i]
    assert time.perf_counter() - start < 10.0


def test_collate_shapes():
    spec = TaskSpec("copy", T=5)
    b = build_dataset(spec, 3, 0).batch([0, 1, 2])
    assert b.inputs.shape == (25, 3, 10) and b.targets.shape == (25, 3)
    assert np.all(b.inputs.sum(axis=-1) == 1)
    add = build_dataset(TaskSpec("adding", T=8), 4, 0).batch(range(4))
    assert add.inputs.shape == (8, 4, 2) and add.targets.shape == (4,)
    assert add.mask[:-1].sum() == 0 and np.all(add.mask[-1] == 1)


def test_task_spec_validation():
    with pytest.raises(ConfigurationError):
        TaskSpec("warp", warp=WarpSpec("uniform_pad", 2))
    with pytest.raises(ConfigurationError):
        TaskSpec("bogus")
    with pytest.raises(ConfigurationError):
        WarpSpec("uniform", max_warp=0)


@pytest.mark.parametrize("spec", [
    TaskSpec("copy", T=4), TaskSpec("adding", T=6),
    TaskSpec("pad", warp=WarpSpec("variable_pad", 3, trunc_len=20)),
])
def test_export_round_trip(tmp_path, spec):
    ds = build_dataset(spec, 4, seed=1)
    path = tmp_path / "data.tsv"
    export_dataset(ds, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4
    for i, line in enumerate(lines):
        assert line.count("\t") == 2
        back = parse_sample(line)
        orig = ds[i]
        assert np.array_equal(back.inputs, orig.inputs)
        assert np.array_equal(np.asarray(back.targets), np.asarray(orig.targets))
        assert np.array_equal(back.loss_mask, orig.loss_mask)
        assert format_sample(back) == line
