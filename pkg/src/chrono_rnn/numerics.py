"""Dense float64 kernels, activations, losses and seeded random streams.

All arrays are ``float64``. Matrices follow the ``(out, in)`` convention so
``affine(W, x, b)`` computes ``W @ x + b``; batched inputs put the batch on
the leading axes and the feature on the last one.

Random numbers come from numpy's PCG64 bit generator (64-bit output,
seeded through ``SeedSequence``). Independent sub-streams are derived by
spawning on a fixed integer key, so the same ``(seed, purpose)`` pair always
yields the same stream.
"""

import zlib

import numpy as np
from scipy.special import expit

from .exceptions import ConfigurationError

DTYPE = np.float64


def affine(W, x, b):
    """Return ``W x + b``.

    ``x`` may be a single vector of shape ``(n,)`` or a batch ``(..., n)``.
    """
    W = np.asarray(W, dtype=DTYPE)
    x = np.asarray(x, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1:] != (W.shape[1],):
        raise ConfigurationError(
            f"affine: cannot combine W{W.shape}, x{x.shape}, b{b.shape}"
        )
    return x @ W.T + b


def sigmoid(x):
    return expit(np.asarray(x, dtype=DTYPE))


def tanh_act(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def log_softmax(logits):
    logits = np.asarray(logits, dtype=DTYPE)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_xent(logits, target):
    """Cross-entropy (nats) of ``target`` under ``softmax(logits)``.

    Works on a single logit vector with an integer target, or on a batch of
    shape ``(..., k)`` with an integer array of shape ``(...)``.

    Returns
    -------
    loss : float or ndarray
        ``-log softmax(logits)[target]``, max-subtracted for stability.
    grad : ndarray
        ``softmax(logits) - onehot(target)``, same shape as ``logits``.
    """
    logits = np.asarray(logits, dtype=DTYPE)
    target = np.asarray(target)
    k = logits.shape[-1]
    if target.shape != logits.shape[:-1]:
        raise ConfigurationError(
            f"softmax_xent: target shape {target.shape} vs logits {logits.shape}"
        )
    if target.size and (target.min() < 0 or target.max() >= k):
        raise ConfigurationError(f"softmax_xent: target outside [0, {k})")
    logp = log_softmax(logits)
    idx = target[..., None].astype(np.intp)
    loss = -np.take_along_axis(logp, idx, axis=-1)[..., 0]
    grad = np.exp(logp)
    np.put_along_axis(grad, idx, np.take_along_axis(grad, idx, axis=-1) - 1.0, axis=-1)
    if loss.ndim == 0:
        loss = float(loss)
    return loss, grad


def make_rng(seed):
    """PCG64 generator for a non-negative integer seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_rng(seed, *purpose):
    """Independent, reproducible stream for ``(seed, *purpose)``.

    ``purpose`` items are strings (hashed with CRC32) or non-negative ints,
    e.g. ``derive_rng(7, "train", 12)`` for sample 12 of the training set.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in purpose))
    return np.random.Generator(np.random.PCG64(ss))


def rng_uniform(rng, lo, hi):
    """One draw from the continuous uniform on ``[lo, hi)``; ``lo == hi`` gives ``lo``."""
    if lo > hi:
        raise ConfigurationError(f"rng_uniform: lo={lo} > hi={hi}")
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))
