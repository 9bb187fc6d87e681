"""Seeded dataset generators for the comparison and sweep experiments."""

from __future__ import annotations

import numpy as np

from .core import Dataset

KINDS = ("random_1d", "xor_2d", "asym_2d", "sine")


def random_1d(M: int = 12, seed: int = 0, y=None, n_modes: int = 3) -> Dataset:
    """``M`` sorted points ``x ~ U[-1, 1]``.

    Labels are either the explicit list ``y`` or a seeded smooth function
    ``sum_k a_k sin(pi k x / 2 + phi_k)`` with ``a_k ~ N(0, 1/k^2)``.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-1.0, 1.0, size=M))
    if y is None:
        k = np.arange(1, n_modes + 1)
        amp = rng.normal(size=n_modes) / k
        phase = rng.uniform(0.0, 2 * np.pi, size=n_modes)
        y = np.sin(np.pi * np.outer(x, k) / 2 + phase) @ amp
    else:
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != M:
            raise ValueError(f"explicit y has {y.shape[0]} values for M={M}")
    return Dataset(x, y, domain=([-1.0], [1.0]))


def xor_2d(a: float = 0.5) -> Dataset:
    """Corners ``(+-a, +-a)`` in lexicographic order, label +1 where the signs agree."""
    if not 0 < a <= 1:
        raise ValueError("corner offset a must lie in (0, 1]")
    X = np.array([[-a, -a], [-a, a], [a, -a], [a, a]])
    y = np.sign(X[:, 0] * X[:, 1])
    return Dataset(X, y, domain=([-1.0, -1.0], [1.0, 1.0]))


def asym_2d(M: int = 5, seed: int = 0) -> Dataset:
    """``M`` seeded points in ``[-1, 1]^2`` with seeded labels in ``[-1, 1]``."""
    if M < 1:
        raise ValueError("M must be at least 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(M, 2))
    y = rng.uniform(-1.0, 1.0, size=M)
    return Dataset(X, y, domain=([-1.0, -1.0], [1.0, 1.0]))


def sine(v: float = 1.0, M: int = 20) -> Dataset:
    """``x_i = i / M`` for ``i < M`` and ``y = sin(2 pi v x)``."""
    if M < 1:
        raise ValueError("M must be at least 1")
    x = np.arange(M) / M
    return Dataset(x, np.sin(2 * np.pi * v * x), domain=([0.0], [1.0]))


def gen_data(kind: str, params: dict | None = None, seed: int = 0) -> Dataset:
    params = dict(params or {})
    if kind == "random_1d":
        return random_1d(seed=seed, **params)
    if kind == "xor_2d":
        return xor_2d(**params)
    if kind == "asym_2d":
        return asym_2d(seed=seed, **params)
    if kind == "sine":
        return sine(**params)
    raise ValueError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")
