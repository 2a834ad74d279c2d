"""Fourier-weighted distance standing in for a weak-star metric on densities."""
from __future__ import annotations

import itertools

import numpy as np


class WeakStarMetric:
    """d(u, v)^2 = sum_{0 < |k|_inf <= K} w_k |u_k - v_k|^2,  w_k = (1 + |k|^2)^-(d+1).

    Coefficients are u_k = int u e^{-2 pi i k.x}, approximated from cell
    values; u and v may live on different grids.
    """

    def __init__(self, d: int = 1, K: int = 16):
        self.d = d
        self.K = K
        ks = np.array([k for k in itertools.product(range(-K, K + 1), repeat=d) if any(k)])
        self.waves = ks
        self.weights = (1.0 + np.sum(ks * ks, axis=1)) ** (-(d + 1))

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        n = int(round(u.size ** (1.0 / self.d)))
        u = u.reshape((n,) * self.d)
        if 2 * self.K >= n:
            raise ValueError(f"grid with {n} cells cannot resolve K={self.K}")
        F = np.fft.fftn(u) / u.size
        idx = tuple((self.waves % n).T)
        return F[idx]

    def distance(self, u: np.ndarray, v: np.ndarray) -> float:
        diff = self.coefficients(u) - self.coefficients(v)
        return float(np.sqrt(np.sum(self.weights * np.abs(diff) ** 2)))
