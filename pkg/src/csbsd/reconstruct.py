"""The CS-BSD outer loop: BP -> hypothesis test -> MMSE, until the residual fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bp
from .density import ValueGrid, spike_slab_mass
from .detection import build_weights, detect_states
from .estimation import embed, mmse_on_support
from .sensing import residual_norm, submatrix_on_support


@dataclass(frozen=True)
class CsBsdConfig:
    epsilon: float | None = None      # None -> stopping_epsilon_default
    max_iters: int = 10
    conv_mode: str = bp.CIRCULAR
    noise_model: str = bp.GRID
    damping: float = 0.0
    n_d: int = 64
    debug_dump: str | None = None     # directory for per-iteration posterior CSVs
    keep_best: bool = False
    defer_mmse: bool = False
    record_history: bool = False
    stop_on_residual: bool = True

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.conv_mode not in bp.CONV_MODES:
            raise ValueError(f"conv_mode must be one of {bp.CONV_MODES}")
        if self.noise_model not in bp.NOISE_MODELS:
            raise ValueError(f"noise_model must be one of {bp.NOISE_MODELS}")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")


@dataclass
class ReconResult:
    estimate: np.ndarray
    states: np.ndarray
    iterations_run: int
    residual_trace: list[float]
    diverged: bool = False
    warnings: dict[str, int] = field(default_factory=dict)
    history: list[np.ndarray] = field(default_factory=list)


def stopping_epsilon_default(m, sigma_n):
    if sigma_n < 0:
        raise ValueError("sigma_n must be >= 0")
    return math.sqrt(m) * sigma_n * 1.1


def _warnings():
    return {"out_of_range": 0, "degenerate": 0, "empty_support": 0, "overcomplete": 0,
            "undetermined": 0, "noiseless": 0}


def _estimate_on(states, z, graph, prior, warn):
    k = int(np.count_nonzero(states))
    if k == 0:
        warn["empty_support"] += 1
        return np.zeros(graph.n)
    if k > graph.m:
        warn["overcomplete"] += 1
    supp = submatrix_on_support(graph, states)
    return embed(states, mmse_on_support(supp, z, prior))


def cs_bsd(z, graph, prior, config=None):
    """Reconstruct a sparse signal from ``z = Phi x + n``."""
    config = config or CsBsdConfig()
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (graph.m,):
        raise ValueError(f"z has length {z.shape} but graph has {graph.m} rows")
    grid = ValueGrid.for_prior(config.n_d, prior.sigma_x)
    prior_mass = spike_slab_mass(grid, prior.q, prior.sigma_x)
    weights = build_weights(grid, prior)
    eps = config.epsilon if config.epsilon is not None else \
        stopping_epsilon_default(graph.m, prior.sigma_n)
    warn = _warnings()
    sigma_bp = prior.sigma_n
    if sigma_bp == 0:
        # the BP likelihood needs a width; use a sliver of the grid step
        warn["noiseless"] += 1
        sigma_bp = 1e-3 * grid.step

    msgs = bp.init_messages(graph, grid)
    trace = []
    history = []
    best = None
    x_hat = np.zeros(graph.n)
    states = np.zeros(graph.n, dtype=np.int8)
    for it in range(1, config.max_iters + 1):
        bp.run_iteration(graph, z, sigma_bp, grid, prior_mass, msgs,
                         conv_mode=config.conv_mode, damping=config.damping,
                         noise_model=config.noise_model)
        if config.debug_dump:
            bp.dump_posteriors(f"{config.debug_dump}/posteriors_iter{it:02d}.csv",
                               grid, msgs.posteriors)
        states, undetermined = detect_states(msgs.posteriors, weights, return_flags=True)
        warn["undetermined"] += int(undetermined.sum())
        last = it == config.max_iters
        if config.defer_mmse and not last:
            trace.append(float("nan"))
            continue
        x_hat = _estimate_on(states, z, graph, prior, warn)
        res = residual_norm(graph, x_hat, z)
        trace.append(res)
        if config.record_history:
            history.append(x_hat.copy())
        if config.keep_best and (best is None or res < best[0]):
            best = (res, x_hat.copy(), states.copy())
        if config.stop_on_residual and res <= eps:
            break

    warn["degenerate"] = msgs.degenerate
    warn["out_of_range"] = msgs.out_of_range
    if config.keep_best and best is not None:
        _, x_hat, states = best
    finite = np.isfinite(x_hat).all()
    return ReconResult(estimate=x_hat, states=states, iterations_run=len(trace),
                       residual_trace=trace, diverged=bool(msgs.degenerate > 0 or not finite),
                       warnings=warn, history=history)


def oracle_mmse(z, graph, prior, true_states):
    """MMSE on the true support, no BP (the MSE* baseline)."""
    z = np.asarray(z, dtype=np.float64)
    warn = _warnings()
    states = np.asarray(true_states).astype(np.int8)
    x_hat = _estimate_on(states, z, graph, prior, warn)
    return ReconResult(estimate=x_hat, states=states, iterations_run=1,
                       residual_trace=[residual_norm(graph, x_hat, z)], warnings=warn)
