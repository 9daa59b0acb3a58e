"""Input checks for the array-facing estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .cells import Batch
from .numerics import DTYPE


def check_sequences(X, n_symbols=None):
    """Validate a batch of sequences, sample-major.

    Integer arrays of shape (n, L) are symbol sequences and get one-hot
    encoded over ``n_symbols``; float arrays of shape (n, L, d) are used as
    they are. Returns an (n, L, d) float64 array.
    """
    X = np.asarray(X)
    if X.ndim == 2 and np.issubdtype(X.dtype, np.integer):
        if X.min() < 0:
            raise ValueError("symbol sequences must be non-negative")
        if n_symbols is not None and X.max() >= n_symbols:
            raise ValueError(f"symbol {X.max()} outside alphabet of size {n_symbols}")
        k = int(X.max()) + 1 if n_symbols is None else n_symbols
        return np.eye(k, dtype=DTYPE)[X]
    X = check_array(X, allow_nd=True, dtype=DTYPE, ensure_2d=False)
    if X.ndim != 3:
        raise ValueError(f"expected (n, L) symbols or (n, L, d) features, got shape {X.shape}")
    return X


def check_symbol_targets(y, shape):
    y = np.asarray(y)
    if y.shape != shape:
        raise ValueError(f"targets have shape {y.shape}, expected {shape}")
    if not np.issubdtype(y.dtype, np.integer) or y.min() < 0:
        raise ValueError("targets must be non-negative integer symbols")
    return y


def check_mask(mask, shape):
    if mask is None:
        return np.ones(shape, dtype=DTYPE)
    mask = np.asarray(mask, dtype=DTYPE)
    if mask.shape != shape:
        raise ValueError(f"mask has shape {mask.shape}, expected {shape}")
    if np.any(mask.sum(axis=1) == 0):
        raise ValueError("every sequence needs at least one unmasked step")
    return mask


class ArrayDataset:
    """Sample-major arrays served as time-major batches."""

    def __init__(self, X, y, mask):
        self.X, self.y, self.mask = X, y, mask
        self._batches = {}

    def __len__(self):
        return len(self.X)

    def batch(self, indices):
        idx = np.asarray(indices)
        xs = np.ascontiguousarray(self.X[idx].swapaxes(0, 1))
        if self.y.ndim == 1:
            return Batch(xs, self.y[idx], self.mask[idx].T)
        return Batch(xs, self.y[idx].T, self.mask[idx].T)

    def fixed_batches(self, batch_size, n=None):
        n = len(self) if n is None else n
        key = (batch_size, n)
        if key not in self._batches:
            self._batches[key] = [
                self.batch(range(s, min(s + batch_size, n))) for s in range(0, n, batch_size)
            ]
        return self._batches[key]
