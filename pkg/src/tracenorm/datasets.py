"""Synthetic low-rank instances and seeded random streams."""

import zlib
from dataclasses import dataclass

import numpy as np

from .problems import ObservedEntries, RegressionData


def stream(seed, name):
    """Independent generator for the component `name` under a root `seed`.

    Streams with different names never share state, so e.g. the data can be
    redrawn without changing the initializer's draws.
    """
    if seed is None:
        raise ValueError("a seed is required")
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), key]))


def n_observed(n, m, rank, oversampling=None, fraction=None):
    """Number of revealed entries from an oversampling ratio or a fraction.

    ``round(OS * (n + m - r) * r)`` counts known entries relative to the
    degrees of freedom of rank-``r`` matrices.
    """
    if (oversampling is None) == (fraction is None):
        raise ValueError("give exactly one of oversampling or fraction")
    if oversampling is not None:
        if oversampling <= 0:
            raise ValueError("oversampling must be positive")
        k = int(round(oversampling * (n + m - rank) * rank))
    else:
        if not 0 < fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        k = int(round(fraction * n * m))
    if k > n * m:
        raise ValueError(f"{k} observations requested but the matrix has only {n * m} entries")
    return k


@dataclass
class CompletionInstance:
    left: np.ndarray
    right: np.ndarray
    entries: ObservedEntries

    @property
    def truth(self):
        return self.left @ self.right.T

    def relative_error(self, X):
        T = self.truth
        return float(np.linalg.norm(X - T) / np.linalg.norm(T))


def make_completion(n, m, rank, seed, oversampling=None, fraction=None, noise=0.0):
    """Gaussian rank-`rank` matrix ``G1 G2^T`` with uniformly revealed entries.

    Parameters
    ----------
    n, m, rank : int
    seed : int
    oversampling, fraction : float
        Exactly one; see `n_observed`.
    noise : float
        Standard deviation of Gaussian noise added to revealed values.
    """
    if not 0 < rank <= min(n, m):
        raise ValueError("rank must lie in [1, min(n, m)]")
    k = n_observed(n, m, rank, oversampling, fraction)
    rng = stream(seed, "data")
    G1 = rng.standard_normal((n, rank))
    G2 = rng.standard_normal((m, rank))
    idx = np.sort(rng.choice(n * m, size=k, replace=False))
    rows, cols = np.divmod(idx, m)
    vals = np.einsum("ij,ij->i", G1[rows], G2[cols])
    if noise:
        vals = vals + noise * rng.standard_normal(k)
    return CompletionInstance(G1, G2, ObservedEntries(rows, cols, vals, (n, m)))


@dataclass
class RegressionInstance:
    X: np.ndarray
    Y: np.ndarray  # noiseless responses
    W: np.ndarray
    train: np.ndarray
    test: np.ndarray
    Y_train: np.ndarray  # training responses, noise included
    noise_std: float

    def train_data(self):
        return RegressionData(self.X[self.train], self.Y_train)

    @property
    def X_test(self):
        return self.X[self.test]

    @property
    def Y_test(self):
        return self.Y[self.test]


def make_regression(n, q, k, rank, seed, train_fraction=0.7, snr=None, noise=None):
    """Gaussian inputs, rank-`rank` coefficients and a random train/test split.

    Noise is added to the training responses only. Its standard deviation is
    `noise`, or ``rms(Y_train) / snr`` when `snr` is given, so that `snr` is
    the ratio of signal and noise energies over the training block.
    """
    if snr is not None and noise is not None:
        raise ValueError("give at most one of snr and noise")
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = stream(seed, "data")
    X = rng.standard_normal((n, q))
    W = rng.standard_normal((q, rank)) @ rng.standard_normal((k, rank)).T
    Y = X @ W
    perm = stream(seed, "split").permutation(n)
    n_train = int(round(train_fraction * n))
    train, test = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    Y_train = Y[train]
    if snr is not None:
        if snr <= 0:
            raise ValueError("snr must be positive")
        sigma = float(np.sqrt(np.mean(Y_train**2))) / snr
    else:
        sigma = float(noise or 0.0)
    if sigma:
        Y_train = Y_train + sigma * stream(seed, "noise").standard_normal(Y_train.shape)
    return RegressionInstance(X, Y, W, train, test, Y_train, sigma)
