"""Problem instances and scalar metrics for noisy compressive sensing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import ValueGrid
from .sensing import matvec


@dataclass(frozen=True)
class PriorParams:
    q: float
    sigma_x: float
    sigma_n: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if not self.sigma_x > 0:
            raise ValueError(f"sigma_x must be positive, got {self.sigma_x}")
        if not self.sigma_n >= 0:
            raise ValueError(f"sigma_n must be nonnegative, got {self.sigma_n}")

    def with_sigma_n(self, sigma_n):
        return PriorParams(self.q, self.sigma_x, sigma_n)


@dataclass(frozen=True)
class SparseSignal:
    values: np.ndarray
    states: np.ndarray

    @property
    def n(self):
        return len(self.values)

    @property
    def support_size(self):
        return int(self.states.sum())


@dataclass(frozen=True)
class Measurement:
    z: np.ndarray
    noise_realization: np.ndarray


@dataclass(frozen=True)
class MetricReport:
    ser: float
    mse: float
    mse_star: float
    snr_db: float
    snr_limit_db: float
    mar: float


def generate_signal(n, prior, seed=None, n_d=64):
    """Spike-and-slab signal quantized onto the shared value grid.

    Nonzero draws are clipped to +-3 sigma_x and snapped to the nearest grid
    point; a draw that would snap onto zero is pushed to the adjacent nonzero
    level of the same sign so the support is preserved.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    grid = ValueGrid.for_prior(n_d, prior.sigma_x)
    rng = np.random.default_rng(seed)
    states = (rng.random(n) < prior.q).astype(np.int8)
    raw = rng.normal(0.0, prior.sigma_x, n)
    hr = grid.half_range
    level = np.rint(np.clip(raw, -hr, hr) / grid.step)
    level = np.clip(level, -grid.zero_index, grid.zero_index - 1)
    level = np.where(level == 0, np.where(raw < 0, -1.0, 1.0), level)
    values = np.where(states == 1, level * grid.step, 0.0)
    return SparseSignal(values, states)


def sense(signal, graph, sigma_n, seed=None):
    if graph.n != signal.n:
        raise ValueError(f"graph has {graph.n} columns but signal has length {signal.n}")
    if sigma_n < 0:
        raise ValueError("sigma_n must be nonnegative")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, graph.m) * sigma_n
    return Measurement(matvec(graph, signal.values) + noise, noise)


def snr_db(graph, signal, sigma_n):
    """Realized SNR ``10 log10(||Phi x||^2 / (M sigma_n^2))``; ``inf`` when noiseless."""
    if sigma_n == 0:
        return math.inf
    energy = float(np.sum(matvec(graph, signal.values) ** 2))
    if energy == 0:
        return -math.inf
    return 10.0 * math.log10(energy / (graph.m * sigma_n ** 2))


def sigma_for_target_snr(graph, signal, target_db):
    if not np.isfinite(target_db):
        raise ValueError("target SNR must be finite")
    energy = float(np.sum(matvec(graph, signal.values) ** 2))
    if energy == 0:
        raise ValueError("cannot calibrate SNR for a signal with ||Phi x|| = 0")
    return math.sqrt(energy / (graph.m * 10.0 ** (target_db / 10.0)))


def ser(detected_states, true_states):
    detected_states = np.asarray(detected_states)
    true_states = np.asarray(true_states)
    if detected_states.shape != true_states.shape:
        raise ValueError("state vectors differ in length")
    return float(np.count_nonzero(detected_states != true_states)) / detected_states.size


def mse(estimate, truth):
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimate.shape != truth.shape:
        raise ValueError("vectors differ in length")
    denom = float(np.dot(truth, truth))
    if denom == 0:
        raise ValueError("truth has zero norm")
    diff = estimate - truth
    return float(np.dot(diff, diff)) / denom


def mse_star(graph_supp, prior, x0_supp):
    """Support-oracle MMSE bound: trace of the posterior covariance over ||x0_supp||^2."""
    x0_supp = np.asarray(x0_supp, dtype=np.float64)
    if graph_supp.n == 0 or x0_supp.size == 0:
        raise ValueError("empty support")
    phi = graph_supp.to_dense()
    k = phi.shape[1]
    if prior.sigma_n == 0:
        # noiseless limit: covariance is zero whenever Phi_supp has full column rank
        if np.linalg.matrix_rank(phi) == k:
            return 0.0
        raise ValueError("sigma_n = 0 with rank-deficient support matrix")
    gram = np.eye(k) / prior.sigma_x ** 2 + phi.T @ phi / prior.sigma_n ** 2
    chol = np.linalg.cholesky(gram)
    inv_chol = np.linalg.solve(chol, np.eye(k))
    trace = float(np.sum(inv_chol ** 2))
    return trace / float(np.dot(x0_supp, x0_supp))


def mar(values):
    values = np.asarray(values, dtype=np.float64)
    nz = values[values != 0]
    if nz.size == 0:
        raise ValueError("MAR undefined for an all-zero vector")
    energy = nz ** 2
    return float(energy.min() / energy.mean())


def snr_limit(n, m, k, mar_value):
    """Linear-scale necessary SNR for ML support recovery (natural log)."""
    if not (k >= 1 and n > k):
        raise ValueError("need 1 <= k < n")
    if m <= k - 1:
        raise ValueError("need m > k - 1")
    if not mar_value > 0:
        raise ValueError("MAR must be positive")
    return 2.0 * k * math.log(n - k) / ((m - k + 1) * mar_value)


def snr_limit_db(n, m, k, mar_value):
    val = snr_limit(n, m, k, mar_value)
    if val == 0:
        return -math.inf
    return 10.0 * math.log10(val)
