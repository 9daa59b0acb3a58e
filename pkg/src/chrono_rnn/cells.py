"""Recurrent cells, readouts and exact backpropagation through time.

Four families share one layout. Sequences are time-major: inputs have shape
``(L, B, n_in)``, hidden trajectories ``(L + 1, B, n_hidden)`` with the zero
initial state in slot 0. The output at step ``t`` is read from the state
*after* consuming ``x_t``.

========  =====================================================  =====================
family    update                                                 extra parameters
========  =====================================================  =====================
rnn       h' = tanh(W_x x + W_h h + b)                           --
leaky     h' = a * tanh(.) + (1 - a) * h,  a = sigmoid(leak)     ``leak`` (n,)
gated     h' = g * tanh(.) + (1 - g) * h,                        ``W_gx, W_gh, b_g``
          g = sigmoid(W_gx x + W_gh h + b_g)
lstm      i, f, o gates, c' = f c + i tanh(.), h' = o tanh(c')   fused ``W_x, W_h, b``
========  =====================================================  =====================

LSTM weights are stored fused, gate blocks stacked in the order
``i, f, c, o`` along the first axis; :func:`lstm_gate` gives named views.

Every pre-activation is evaluated as ``(x W_x^T + b) + h W_h^T`` both in the
single-step functions and in the sequence kernels, so a step-by-step replay
reproduces a sequence forward pass exactly.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import ConfigurationError, NumericalError
from .numerics import DTYPE, log_softmax, make_rng, sigmoid

ARCHS = ("rnn", "leaky", "gated", "lstm")
LSTM_GATES = ("i", "f", "c", "o")


class CellState(NamedTuple):
    h: np.ndarray
    c: Optional[np.ndarray] = None


def _state(s):
    return s if isinstance(s, CellState) else CellState(np.asarray(s, dtype=DTYPE))


def lstm_gate(params, gate, kind="b"):
    """View on one gate block of a fused LSTM parameter (``kind`` in W_x, W_h, b)."""
    n = params["W_h"].shape[1]
    k = LSTM_GATES.index(gate)
    return params[kind][k * n:(k + 1) * n]


def param_shapes(arch, n_in, n_hidden):
    n = n_hidden
    if arch == "rnn":
        return {"W_x": (n, n_in), "W_h": (n, n), "b": (n,)}
    if arch == "leaky":
        return {"W_x": (n, n_in), "W_h": (n, n), "b": (n,), "leak": (n,)}
    if arch == "gated":
        return {
            "W_x": (n, n_in), "W_h": (n, n), "b": (n,),
            "W_gx": (n, n_in), "W_gh": (n, n), "b_g": (n,),
        }
    if arch == "lstm":
        return {"W_x": (4 * n, n_in), "W_h": (4 * n, n), "b": (4 * n,)}
    raise ConfigurationError(f"unknown architecture {arch!r}; expected one of {ARCHS}")


def init_params(arch, n_in, n_hidden, rng):
    """Weights uniform in +-1/sqrt(fan_in), every bias (and leak logit) zero."""
    params = {}
    for name, shape in param_shapes(arch, n_in, n_hidden).items():
        if len(shape) == 2:
            bound = 1.0 / np.sqrt(shape[1])
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape, dtype=DTYPE)
    return params


def _check_params(arch, params, n_in=None):
    W_h = params.get("W_h")
    if W_h is None:
        raise ConfigurationError("parameter set has no W_h")
    n = W_h.shape[1]
    n_in = params["W_x"].shape[1] if n_in is None else n_in
    expected = param_shapes(arch, n_in, n)
    for name, shape in expected.items():
        if name not in params or params[name].shape != shape:
            got = None if name not in params else params[name].shape
            raise ConfigurationError(f"{arch}: {name} has shape {got}, expected {shape}")
    return n


# -- single steps ---------------------------------------------------------

def _xw(W, x, b):
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] != W.shape[1]:
        raise ConfigurationError(f"input width {x.shape[-1]} != {W.shape[1]}")
    return x @ W.T + b


def _hw(W, h):
    if h.shape[-1] != W.shape[1]:
        raise ConfigurationError(f"state width {h.shape[-1]} != {W.shape[1]}")
    return h @ W.T


def rnn_step(p, x_t, s):
    """h' = tanh(W_x x + W_h h + b)."""
    _check_params("rnn", p)
    h = _state(s).h
    return CellState(np.tanh(_xw(p["W_x"], x_t, p["b"]) + _hw(p["W_h"], h)))


def leaky_step(p, x_t, s):
    _check_params("leaky", p)
    h = _state(s).h
    u = np.tanh(_xw(p["W_x"], x_t, p["b"]) + _hw(p["W_h"], h))
    a = sigmoid(p["leak"])
    return CellState(a * u + (1.0 - a) * h)


def gated_step(p, x_t, s):
    """One gated step; returns ``(new_state, gate_values)``."""
    _check_params("gated", p)
    h = _state(s).h
    u = np.tanh(_xw(p["W_x"], x_t, p["b"]) + _hw(p["W_h"], h))
    g = sigmoid(_xw(p["W_gx"], x_t, p["b_g"]) + _hw(p["W_gh"], h))
    return CellState(g * u + (1.0 - g) * h), g


def lstm_step(p, x_t, s):
    n = _check_params("lstm", p)
    s = _state(s)
    h = s.h
    c = np.zeros_like(h) if s.c is None else s.c
    z = _xw(p["W_x"], x_t, p["b"]) + _hw(p["W_h"], h)
    i = sigmoid(z[..., :n])
    f = sigmoid(z[..., n:2 * n])
    g = np.tanh(z[..., 2 * n:3 * n])
    o = sigmoid(z[..., 3 * n:])
    c_new = f * c + i * g
    return CellState(o * np.tanh(c_new), c_new)


# -- sequence kernels -----------------------------------------------------
# Each forward returns (H, cache) with H of shape (L+1, B, n); each backward
# takes dH of shape (L, B, n) (loss gradient w.r.t. H[1:]) and returns grads.

def _rnn_forward(p, xs):
    L, B, _ = xs.shape
    n = p["W_h"].shape[0]
    xw = xs @ p["W_x"].T + p["b"]
    H = np.zeros((L + 1, B, n), dtype=DTYPE)
    W_hT = p["W_h"].T
    for t in range(L):
        H[t + 1] = np.tanh(xw[t] + H[t] @ W_hT)
    return H, {}


def _rnn_backward(p, xs, H, cache, dH):
    L, B, n = dH.shape
    dpre = np.empty_like(dH)
    dh = np.zeros((B, n), dtype=DTYPE)
    W_h = p["W_h"]
    for t in range(L - 1, -1, -1):
        dh = dh + dH[t]
        dpre[t] = dh * (1.0 - H[t + 1] ** 2)
        dh = dpre[t] @ W_h
    return _input_and_recurrent_grads(dpre, xs, H, "W_x", "W_h", "b")


def _leaky_forward(p, xs):
    L, B, _ = xs.shape
    n = p["W_h"].shape[0]
    xw = xs @ p["W_x"].T + p["b"]
    a = sigmoid(p["leak"])
    H = np.zeros((L + 1, B, n), dtype=DTYPE)
    U = np.empty((L, B, n), dtype=DTYPE)
    W_hT = p["W_h"].T
    for t in range(L):
        U[t] = np.tanh(xw[t] + H[t] @ W_hT)
        H[t + 1] = a * U[t] + (1.0 - a) * H[t]
    return H, {"U": U, "a": a}


def _leaky_backward(p, xs, H, cache, dH):
    L, B, n = dH.shape
    U, a = cache["U"], cache["a"]
    dpre = np.empty_like(dH)
    da = np.zeros(n, dtype=DTYPE)
    dh = np.zeros((B, n), dtype=DTYPE)
    W_h = p["W_h"]
    for t in range(L - 1, -1, -1):
        dh = dh + dH[t]
        dpre[t] = dh * a * (1.0 - U[t] ** 2)
        da += (dh * (U[t] - H[t])).sum(axis=0)
        dh = dh * (1.0 - a) + dpre[t] @ W_h
    grads = _input_and_recurrent_grads(dpre, xs, H, "W_x", "W_h", "b")
    grads["leak"] = da * a * (1.0 - a)
    return grads


def _gated_forward(p, xs):
    L, B, _ = xs.shape
    n = p["W_h"].shape[0]
    xw = xs @ p["W_x"].T + p["b"]
    xg = xs @ p["W_gx"].T + p["b_g"]
    H = np.zeros((L + 1, B, n), dtype=DTYPE)
    U = np.empty((L, B, n), dtype=DTYPE)
    G = np.empty((L, B, n), dtype=DTYPE)
    W_hT, W_ghT = p["W_h"].T, p["W_gh"].T
    for t in range(L):
        U[t] = np.tanh(xw[t] + H[t] @ W_hT)
        G[t] = sigmoid(xg[t] + H[t] @ W_ghT)
        H[t + 1] = G[t] * U[t] + (1.0 - G[t]) * H[t]
    return H, {"U": U, "G": G}


def _gated_backward(p, xs, H, cache, dH):
    L, B, n = dH.shape
    U, G = cache["U"], cache["G"]
    dpre = np.empty_like(dH)
    dgz = np.empty_like(dH)
    dh = np.zeros((B, n), dtype=DTYPE)
    W_h, W_gh = p["W_h"], p["W_gh"]
    for t in range(L - 1, -1, -1):
        dh = dh + dH[t]
        g = G[t]
        dpre[t] = dh * g * (1.0 - U[t] ** 2)
        dgz[t] = dh * (U[t] - H[t]) * g * (1.0 - g)
        dh = dh * (1.0 - g) + dpre[t] @ W_h + dgz[t] @ W_gh
    grads = _input_and_recurrent_grads(dpre, xs, H, "W_x", "W_h", "b")
    grads.update(_input_and_recurrent_grads(dgz, xs, H, "W_gx", "W_gh", "b_g"))
    return grads


def _lstm_forward(p, xs):
    L, B, _ = xs.shape
    n = p["W_h"].shape[1]
    xw = xs @ p["W_x"].T + p["b"]
    H = np.zeros((L + 1, B, n), dtype=DTYPE)
    C = np.zeros((L + 1, B, n), dtype=DTYPE)
    A = np.empty((L, B, 4 * n), dtype=DTYPE)  # activated i, f, g, o
    TC = np.empty((L, B, n), dtype=DTYPE)
    W_hT = p["W_h"].T
    for t in range(L):
        z = xw[t] + H[t] @ W_hT
        a = A[t]
        a[:, :2 * n] = sigmoid(z[:, :2 * n])
        a[:, 2 * n:3 * n] = np.tanh(z[:, 2 * n:3 * n])
        a[:, 3 * n:] = sigmoid(z[:, 3 * n:])
        C[t + 1] = a[:, n:2 * n] * C[t] + a[:, :n] * a[:, 2 * n:3 * n]
        TC[t] = np.tanh(C[t + 1])
        H[t + 1] = a[:, 3 * n:] * TC[t]
    return H, {"A": A, "C": C, "TC": TC}


def _lstm_backward(p, xs, H, cache, dH):
    L, B, n = dH.shape
    A, C, TC = cache["A"], cache["C"], cache["TC"]
    dz = np.empty((L, B, 4 * n), dtype=DTYPE)
    dh = np.zeros((B, n), dtype=DTYPE)
    dc = np.zeros((B, n), dtype=DTYPE)
    W_h = p["W_h"]
    for t in range(L - 1, -1, -1):
        a = A[t]
        i, f, g, o = a[:, :n], a[:, n:2 * n], a[:, 2 * n:3 * n], a[:, 3 * n:]
        dh = dh + dH[t]
        tc = TC[t]
        dc = dc + dh * o * (1.0 - tc * tc)
        d = dz[t]
        d[:, :n] = dc * g * i * (1.0 - i)
        d[:, n:2 * n] = dc * C[t] * f * (1.0 - f)
        d[:, 2 * n:3 * n] = dc * i * (1.0 - g * g)
        d[:, 3 * n:] = dh * tc * o * (1.0 - o)
        dc = dc * f
        dh = d @ W_h
    return _input_and_recurrent_grads(dz, xs, H, "W_x", "W_h", "b")


def _input_and_recurrent_grads(dpre, xs, H, wx, wh, b):
    m = dpre.shape[-1]
    flat = dpre.reshape(-1, m)
    return {
        wx: flat.T @ xs.reshape(-1, xs.shape[-1]),
        wh: flat.T @ H[:-1].reshape(-1, H.shape[-1]),
        b: flat.sum(axis=0),
    }


_KERNELS = {
    "rnn": (_rnn_forward, _rnn_backward),
    "leaky": (_leaky_forward, _leaky_backward),
    "gated": (_gated_forward, _gated_backward),
    "lstm": (_lstm_forward, _lstm_backward),
}


def cell_forward(arch, params, xs):
    """Run a cell over ``xs`` (L, B, n_in) from a zero state.

    Returns the hidden trajectory ``H`` of shape (L+1, B, n) and an opaque
    cache for :func:`cell_backward`.
    """
    xs = np.asarray(xs, dtype=DTYPE)
    if xs.ndim != 3:
        raise ConfigurationError(f"inputs must be (L, B, n_in), got {xs.shape}")
    _check_params(arch, params, xs.shape[2])
    return _KERNELS[arch][0](params, xs)


def cell_backward(arch, params, xs, H, cache, dH):
    return _KERNELS[arch][1](params, xs, H, cache, dH)


# -- readouts, model and sequence loss ------------------------------------

def readout_class(p, h):
    """Logits ``W_out h + b_out`` for a state (or batch/trajectory of states)."""
    h = _state(h).h if isinstance(h, CellState) else np.asarray(h, dtype=DTYPE)
    if h.shape[-1] != p["W_out"].shape[1]:
        raise ConfigurationError(
            f"readout expects width {p['W_out'].shape[1]}, got {h.shape[-1]}"
        )
    return h @ p["W_out"].T + p["b_out"]


@dataclass
class Batch:
    """A rectangular batch, time-major.

    ``inputs`` is (L, B, n_in). For classification ``targets`` is an int
    array (L, B) and ``mask`` a 0/1 array (L, B); for the last-step
    regression output ``targets`` is (B,) and ``mask`` marks the final step.
    """

    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray

    @property
    def size(self):
        return self.inputs.shape[1]


@dataclass
class RecurrentModel:
    """A recurrent cell plus an affine readout.

    ``output`` is ``"classify"`` (softmax cross-entropy at every masked step)
    or ``"last"`` (scalar regression from the final state, squared error).
    """

    arch: str
    n_in: int
    n_hidden: int
    n_out: int
    output: str = "classify"
    params: dict = field(default_factory=dict)

    @classmethod
    def create(cls, arch, n_in, n_hidden, n_out, rng=None, output="classify"):
        if arch not in ARCHS:
            raise ConfigurationError(f"unknown architecture {arch!r}; expected one of {ARCHS}")
        if output not in ("classify", "last"):
            raise ConfigurationError(f"unknown output mode {output!r}")
        if min(n_in, n_hidden, n_out) < 1:
            raise ConfigurationError("model dimensions must be >= 1")
        rng = make_rng(0) if rng is None else rng
        params = init_params(arch, n_in, n_hidden, rng)
        bound = 1.0 / np.sqrt(n_hidden)
        params["W_out"] = rng.uniform(-bound, bound, size=(n_out, n_hidden))
        params["b_out"] = np.zeros(n_out, dtype=DTYPE)
        return cls(arch, n_in, n_hidden, n_out, output, params)

    @property
    def cell_params(self):
        return {k: v for k, v in self.params.items() if k not in ("W_out", "b_out")}

    def copy(self):
        return RecurrentModel(
            self.arch, self.n_in, self.n_hidden, self.n_out, self.output,
            {k: v.copy() for k, v in self.params.items()},
        )

    def hidden_states(self, inputs):
        """Hidden trajectory after each input step, shape (L, B, n_hidden)."""
        H, _ = cell_forward(self.arch, self.params, inputs)
        return H[1:]

    def outputs(self, inputs):
        """Per-step logits (L, B, k) or final regression values (B,)."""
        H = self.hidden_states(inputs)
        if self.output == "classify":
            return readout_class(self.params, H)
        return readout_class(self.params, H[-1])[:, 0]


@dataclass
class Tape:
    """Everything :func:`sequence_backward` needs from one forward pass."""

    arch: str
    inputs: np.ndarray
    H: np.ndarray
    cache: dict
    d_out: np.ndarray  # d loss / d readout output
    outputs: np.ndarray
    per_sample_loss: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]


def _classification_loss(logits, targets, mask):
    L, B, k = logits.shape
    mask = np.asarray(mask, dtype=DTYPE)
    counts = mask.sum(axis=0)
    if np.any(counts == 0):
        raise ConfigurationError("every sample needs at least one masked-in step")
    logp = log_softmax(logits)
    idx = targets[..., None].astype(np.intp)
    nll = -np.take_along_axis(logp, idx, axis=-1)[..., 0]
    per_sample = (nll * mask).sum(axis=0) / counts
    weight = mask / (counts * B)
    d = np.exp(logp)
    np.put_along_axis(d, idx, np.take_along_axis(d, idx, axis=-1) - 1.0, axis=-1)
    d *= weight[..., None]
    return per_sample, d


def sequence_forward(model, batch):
    """Loss of ``model`` on ``batch`` and the tape for the backward pass.

    Classification: mean over masked steps, then mean over the batch.
    Last-step regression: mean over the batch of the squared error.
    """
    xs = np.asarray(batch.inputs, dtype=DTYPE)
    if xs.shape[-1] != model.n_in:
        raise ConfigurationError(f"model expects {model.n_in} input features, got {xs.shape[-1]}")
    H, cache = cell_forward(model.arch, model.params, xs)
    B = xs.shape[1]
    if model.output == "classify":
        targets = np.asarray(batch.targets)
        if targets.shape != xs.shape[:2]:
            raise ConfigurationError(f"targets {targets.shape} do not match inputs {xs.shape[:2]}")
        if targets.min() < 0 or targets.max() >= model.n_out:
            raise ConfigurationError("target symbol outside the model alphabet")
        out = readout_class(model.params, H[1:])
        per_sample, d_out = _classification_loss(out, targets, batch.mask)
    else:
        targets = np.asarray(batch.targets, dtype=DTYPE).reshape(B)
        out = readout_class(model.params, H[-1])[:, 0]
        err = out - targets
        per_sample = err ** 2
        d_out = 2.0 * err / B
    loss = float(per_sample.mean())
    return loss, Tape(model.arch, xs, H, cache, d_out, out, per_sample)


def sequence_backward(model, tape, loss_scale=1.0):
    """Exact gradient of ``loss_scale * loss`` w.r.t. every model parameter."""
    if tape.arch != model.arch or tape.H.shape[-1] != model.n_hidden:
        raise ConfigurationError("tape was recorded for a different model")
    p = model.params
    H = tape.H
    d_out = tape.d_out * loss_scale
    if model.output == "classify":
        k = d_out.shape[-1]
        flat = d_out.reshape(-1, k)
        g_out = flat.T @ H[1:].reshape(-1, H.shape[-1])
        gb_out = flat.sum(axis=0)
        dH = d_out @ p["W_out"]
    else:
        g_out = d_out[None, :] @ H[-1]
        gb_out = np.array([d_out.sum()])
        dH = np.zeros_like(H[1:])
        dH[-1] = d_out[:, None] * p["W_out"][0]
    grads = cell_backward(model.arch, p, tape.inputs, H, tape.cache, dH)
    grads["W_out"] = g_out
    grads["b_out"] = gb_out
    return grads


def loss_and_grads(model, batch):
    loss, tape = sequence_forward(model, batch)
    return loss, sequence_backward(model, tape)


def grad_check(arch, n_h=8, seq_len=12, seed=0, batch=2, eps=1e-5, zero_params=False,
               output="classify", n_in=3, n_out=4):
    """Max relative error between BPTT and central finite differences.

    Builds a random instance (dense real inputs, random weights and biases),
    perturbs every parameter entry by ``+-eps`` and compares. The relative
    error per entry is ``|g_a - g_fd| / max(1e-8, |g_a| + |g_fd|)``.
    """
    rng = make_rng(seed)
    if output == "last":
        n_out = 1
    model = RecurrentModel.create(arch, n_in, n_h, n_out, rng=rng, output=output)
    for name, v in model.params.items():
        v[...] = 0.0 if zero_params else rng.uniform(-0.8, 0.8, size=v.shape)
    xs = rng.standard_normal((seq_len, batch, n_in))
    if output == "classify":
        targets = rng.integers(0, n_out, size=(seq_len, batch))
        mask = (rng.random((seq_len, batch)) < 0.7).astype(DTYPE)
        mask[-1] = 1.0
    else:
        targets = rng.random(batch)
        mask = np.zeros((seq_len, batch))
        mask[-1] = 1.0
    b = Batch(xs, targets, mask)

    _, analytic = loss_and_grads(model, b)
    worst = 0.0
    for name, v in model.params.items():
        g = analytic[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite analytic gradient for {name}")
        flat = v.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + eps
            lp, _ = sequence_forward(model, b)
            flat[j] = old - eps
            lm, _ = sequence_forward(model, b)
            flat[j] = old
            fd = (lp - lm) / (2 * eps)
            ga = g.reshape(-1)[j]
            if not np.isfinite(fd):
                raise NumericalError(f"non-finite finite difference for {name}[{j}]")
            rel = abs(ga - fd) / max(1e-8, abs(ga) + abs(fd))
            worst = max(worst, rel)
    return worst
