"""Gate-bias initialization policies.

Only biases are touched; weight matrices come back bit-identical. Every
function returns a new parameter dict and leaves its input alone.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .cells import lstm_gate
from .exceptions import ConfigurationError

GATE_RANGE_EPS = 1e-6
HEAVY_TAIL_CAP = 10 ** 6

POLICIES = ("default", "standard", "chrono", "gate-range", "heavy-tail")


def _copy(params):
    return {k: v.copy() for k, v in params.items()}


def _lstm_biases_zero(p):
    p["b"] = np.zeros_like(p["b"])
    return p


def standard_init(params, forget_bias=1.0):
    """LSTM forget-gate biases set to ``forget_bias``, all other biases zero."""
    if not np.isfinite(forget_bias):
        raise ConfigurationError("forget_bias must be finite")
    p = _lstm_biases_zero(_copy(params))
    lstm_gate(p, "f")[:] = forget_bias
    return p


def chrono_init(params, t_max, rng, integer=False):
    """Chrono LSTM biases: ``b_f = log(u)``, ``u ~ U[1, t_max - 1]``, ``b_i = -b_f``.

    With ``integer=True`` the draw is over the integers ``1..floor(t_max - 1)``
    instead of the continuous interval.
    """
    if t_max < 2:
        raise ConfigurationError(f"chrono initialization needs t_max >= 2, got {t_max}")
    p = _lstm_biases_zero(_copy(params))
    n = p["W_h"].shape[1]
    if integer:
        u = rng.integers(1, int(np.floor(t_max - 1)) + 1, size=n).astype(float)
    else:
        u = np.full(n, 1.0) if t_max == 2 else rng.uniform(1.0, t_max - 1.0, size=n)
    b_f = np.log(u)
    lstm_gate(p, "f")[:] = b_f
    lstm_gate(p, "i")[:] = -b_f
    return p


def gate_range_init(params, t_min, t_max, rng):
    """Gated-RNN gate biases ``b_g = -log(u - 1)``, ``u ~ U[t_min, t_max]``.

    At zero pre-activation the gate then sits at ``sigmoid(b_g) = 1/u``, a
    forgetting time between ``t_min`` and ``t_max`` steps. ``t_min`` must be
    strictly above 1; pass ``t_min=2`` for "from one step" (gate 1/2).
    """
    if t_min < 1 + GATE_RANGE_EPS:
        raise ConfigurationError(f"gate_range needs t_min > 1, got {t_min}")
    if t_max < t_min:
        raise ConfigurationError(f"gate_range needs t_max >= t_min, got [{t_min}, {t_max}]")
    p = _copy(params)
    n = p["b_g"].shape[0]
    u = np.full(n, float(t_min)) if t_max == t_min else rng.uniform(t_min, t_max, size=n)
    p["b_g"] = -np.log(u - 1.0)
    return p


@lru_cache(maxsize=8)
def _heavy_tail_cdf(t_cap):
    k = np.arange(1, t_cap + 1, dtype=float)
    w = 1.0 / (k * np.log(k + 1.0) ** 2)
    cdf = np.cumsum(w)
    return cdf / cdf[-1]


def heavy_tail_weights(t_cap):
    """Normalized probabilities of ``k = 1..t_cap`` under ``1 / (k log(k+1)^2)``."""
    cdf = _heavy_tail_cdf(int(t_cap))
    return np.diff(cdf, prepend=0.0)


def heavy_tail_T(rng, t_cap=HEAVY_TAIL_CAP, size=None):
    """Time ranges from the slowly decaying prior, truncated to ``1..t_cap``.

    Inverse-CDF sampling over the precomputed, normalized table.
    """
    if t_cap < 2:
        raise ConfigurationError(f"heavy-tail prior needs t_cap >= 2, got {t_cap}")
    cdf = _heavy_tail_cdf(int(t_cap))
    u = rng.random(size)
    k = np.searchsorted(cdf, u, side="right") + 1
    k = np.minimum(k, t_cap)
    return int(k) if size is None else k


def heavy_tail_init(params, arch, rng, t_cap=HEAVY_TAIL_CAP):
    """One time range ``k`` per unit from the heavy-tailed prior.

    LSTM: ``b_f = log k``, ``b_i = -log k``. Gated RNN: ``b_g = -log k``, so the
    resting gate value is ``1/(k+1)``.
    """
    p = _copy(params)
    if arch == "lstm":
        p = _lstm_biases_zero(p)
        n = p["W_h"].shape[1]
        b = np.log(heavy_tail_T(rng, t_cap, size=n).astype(float))
        lstm_gate(p, "f")[:] = b
        lstm_gate(p, "i")[:] = -b
    elif arch == "gated":
        n = p["b_g"].shape[0]
        p["b_g"] = -np.log(heavy_tail_T(rng, t_cap, size=n).astype(float))
    else:
        raise ConfigurationError(f"heavy-tail initialization needs a gated cell, not {arch!r}")
    return p


@dataclass
class InitPolicy:
    """Which gate-bias initialization to apply, with its parameters.

    ``default`` means: LSTM forget bias ``forget_bias`` (the usual 1), gated
    RNN gate bias 0, nothing for plain and leaky cells. ``chrono`` on a gated
    RNN is the gate-range rule with ``t_min = 2``.
    """

    kind: str = "default"
    t_max: Optional[float] = None
    t_min: Optional[float] = None
    forget_bias: float = 1.0
    t_cap: int = HEAVY_TAIL_CAP
    integer: bool = False

    def validate(self, arch):
        if self.kind not in POLICIES:
            raise ConfigurationError(f"unknown init {self.kind!r}; expected one of {POLICIES}")
        allowed = {
            "rnn": ("default",),
            "leaky": ("default",),
            "gated": ("default", "chrono", "gate-range", "heavy-tail"),
            "lstm": ("default", "standard", "chrono", "heavy-tail"),
        }[arch]
        if self.kind not in allowed:
            raise ConfigurationError(f"--init {self.kind} is not valid for --arch {arch}")
        if self.kind in ("chrono", "gate-range"):
            if self.t_max is None:
                raise ConfigurationError(f"--init {self.kind} needs t_max")
            if self.kind == "chrono" and arch == "lstm" and self.t_max < 2:
                raise ConfigurationError("chrono needs t_max >= 2")
        if self.kind == "gate-range" and self.t_min is None:
            raise ConfigurationError("--init gate-range needs t_min")
        return self

    def apply(self, arch, params, rng):
        self.validate(arch)
        if arch == "lstm":
            if self.kind in ("default", "standard"):
                return standard_init(params, self.forget_bias)
            if self.kind == "chrono":
                return chrono_init(params, self.t_max, rng, integer=self.integer)
            return heavy_tail_init(params, arch, rng, self.t_cap)
        if arch == "gated":
            if self.kind == "default":
                p = _copy(params)
                p["b_g"] = np.zeros_like(p["b_g"])
                return p
            if self.kind == "chrono":
                return gate_range_init(params, 2.0, max(2.0, self.t_max), rng)
            if self.kind == "gate-range":
                return gate_range_init(params, self.t_min, self.t_max, rng)
            return heavy_tail_init(params, arch, rng, self.t_cap)
        return _copy(params)
