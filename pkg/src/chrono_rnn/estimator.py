"""scikit-learn style wrappers around the recurrent models.

Sequences go in sample-major, like any other sklearn input: ``(n, L)``
integer symbols or ``(n, L, d)`` real features.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .cells import RecurrentModel
from .init import InitPolicy
from .numerics import derive_rng, log_softmax
from .optim import LrSchedule, RMSProp
from .train import evaluate, fit_model
from .validation import ArrayDataset, check_mask, check_sequences, check_symbol_targets


class _RecurrentBase(BaseEstimator):
    _output = "classify"

    def __init__(self, arch="gated", hidden=64, init="default", t_max=None, t_min=None,
                 forget_bias=1.0, batch_size=32, lr=1e-3, rho=0.9, eps=1e-8, max_iter=500,
                 lr_patience=None, eval_every=50, monitor_samples=500, random_state=0):
        self.arch = arch
        self.hidden = hidden
        self.init = init
        self.t_max = t_max
        self.t_min = t_min
        self.forget_bias = forget_bias
        self.batch_size = batch_size
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.max_iter = max_iter
        self.lr_patience = lr_patience
        self.eval_every = eval_every
        self.monitor_samples = monitor_samples
        self.random_state = random_state

    def _fit(self, X, y, mask, n_out):
        seed = 0 if self.random_state is None else int(self.random_state)
        policy = InitPolicy(kind=self.init, t_max=self.t_max, t_min=self.t_min,
                            forget_bias=self.forget_bias)
        model = RecurrentModel.create(self.arch, X.shape[2], self.hidden, n_out,
                                      rng=derive_rng(seed, "weights"), output=self._output)
        model.params.update(policy.apply(self.arch, model.cell_params, derive_rng(seed, "init")))

        data = ArrayDataset(X, y, mask)
        B = min(self.batch_size, len(X))
        order_rng = derive_rng(seed, "shuffle")
        order = []

        def next_batch(it):
            nonlocal order
            if len(order) < B:
                order = list(order_rng.permutation(len(X)))
            idx, order = order[:B], order[B:]
            return data.batch(idx)

        monitor = ArrayDataset(*(a[: self.monitor_samples] for a in (X, y, mask)))
        opt = RMSProp(self.lr, self.rho, self.eps)
        schedule = None
        if self.lr_patience is not None:
            schedule = LrSchedule(patience=max(1, math.ceil(self.lr_patience / self.eval_every)))
        self.log_ = fit_model(model, next_batch, self.max_iter, lambda m: evaluate(m, monitor),
                              opt, schedule, self.eval_every)
        self.model_ = model
        self.n_features_in_ = X.shape[2]
        return self

    def transform(self, X):
        """Hidden-state trajectories, shape (n, L, hidden)."""
        check_is_fitted(self, "model_")
        X = self._check_X(X)
        return self.model_.hidden_states(X.swapaxes(0, 1)).swapaxes(0, 1)

    def _check_X(self, X):
        X = check_sequences(X, getattr(self, "n_symbols_", None))
        if hasattr(self, "n_features_in_") and X.shape[2] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[2]} features, estimator expects {self.n_features_in_}")
        return X


class SequenceClassifier(ClassifierMixin, _RecurrentBase):
    """Per-step symbol prediction with a recurrent cell and softmax readout.

    Parameters
    ----------
    arch : {"rnn", "leaky", "gated", "lstm"}
    hidden : int
        Number of recurrent units.
    init : {"default", "standard", "chrono", "gate-range", "heavy-tail"}
        Gate-bias policy; ``t_max``, ``t_min`` and ``forget_bias`` configure it.
    max_iter : int
        Number of RMSprop updates, each on one batch of ``batch_size``.
    lr_patience : int or None
        Halve the learning rate when the loss on the first
        ``monitor_samples`` training sequences has not improved for this
        many batches. ``None`` keeps it constant.

    Attributes
    ----------
    model_ : RecurrentModel
    log_ : MetricsLog
    classes_ : ndarray of the symbols ``0..n_symbols_-1``
    """

    def fit(self, X, y, mask=None):
        X_arr = np.asarray(X)
        y = np.asarray(y)
        symbolic = X_arr.ndim == 2
        k = int(max(y.max(), X_arr.max() if symbolic else 0)) + 1
        if symbolic:
            self.n_symbols_ = k
        elif hasattr(self, "n_symbols_"):
            del self.n_symbols_
        X = check_sequences(X_arr, k if symbolic else None)
        y = check_symbol_targets(y, X.shape[:2])
        mask = check_mask(mask, X.shape[:2])
        self.classes_ = np.arange(k)
        return self._fit(X, y, mask, k)

    def predict_proba(self, X):
        """Per-step symbol probabilities, shape (n, L, n_symbols)."""
        check_is_fitted(self, "model_")
        X = self._check_X(X)
        logits = self.model_.outputs(X.swapaxes(0, 1))
        return np.exp(log_softmax(logits)).swapaxes(0, 1)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=-1)

    def score(self, X, y, mask=None):
        """Fraction of (unmasked) steps predicted correctly."""
        pred = self.predict(X)
        y = np.asarray(y)
        mask = check_mask(mask, pred.shape)
        return float(((pred == y) * mask).sum() / mask.sum())


class SequenceRegressor(RegressorMixin, _RecurrentBase):
    """Scalar regression from the final hidden state (adding-task style).

    Same parameters as :class:`SequenceClassifier`; ``score`` is R^2.
    """

    _output = "last"

    def fit(self, X, y):
        X = check_sequences(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        if len(y) != len(X):
            raise ValueError(f"{len(X)} sequences but {len(y)} targets")
        mask = np.zeros(X.shape[:2])
        mask[:, -1] = 1.0
        return self._fit(X, y, mask, 1)

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = self._check_X(X)
        return self.model_.outputs(X.swapaxes(0, 1))
