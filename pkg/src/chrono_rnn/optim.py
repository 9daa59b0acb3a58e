"""Plain RMSprop and the evaluation-driven learning-rate halving schedule."""

from dataclasses import dataclass, field
import math

import numpy as np

from .exceptions import ConfigurationError, NumericalError


@dataclass
class RMSProp:
    """Uncentered RMSprop::

        s     <- rho * s + (1 - rho) * g**2
        theta <- theta - lr * g / sqrt(s + eps)

    No clipping. A non-finite gradient raises :class:`NumericalError` before
    anything is modified.
    """

    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    s: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigurationError(f"lr must be > 0, got {self.lr}")
        if not 0 <= self.rho < 1:
            raise ConfigurationError(f"rho must be in [0, 1), got {self.rho}")
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")

    def step(self, params, grads, iteration=None):
        """Update ``params`` in place and return them."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient in {name}", iteration)
        for name, g in grads.items():
            p = params[name]
            if g.shape != p.shape:
                raise ConfigurationError(f"gradient {name}{g.shape} vs parameter {p.shape}")
            s = self.s.get(name)
            if s is None:
                s = self.s[name] = np.zeros_like(p)
            s *= self.rho
            s += (1.0 - self.rho) * g * g
            p -= self.lr * g / np.sqrt(s + self.eps)
        return params


def rmsprop_step(state, params, grads):
    """Functional form: returns ``(new_params, state)`` without touching ``params``."""
    new = {k: v.copy() for k, v in params.items()}
    state.step(new, grads)
    return new, state


@dataclass
class LrSchedule:
    """Halve the learning rate after ``patience`` evaluations without a new best.

    ``patience`` counts evaluation points, not batches.
    """

    patience: int = 100
    best_eval: float = math.inf
    since_best: int = 0
    halvings: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}")

    def update(self, eval_loss, opt):
        if eval_loss < self.best_eval:
            self.best_eval = eval_loss
            self.since_best = 0
            return False
        self.since_best += 1
        if self.since_best >= self.patience:
            opt.lr = opt.lr / 2
            self.since_best = 0
            self.halvings += 1
            return True
        return False


def schedule_update(sched, eval_loss, state):
    sched.update(eval_loss, state)
    return sched, state
