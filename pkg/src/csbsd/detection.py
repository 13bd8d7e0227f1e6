"""Bayesian hypothesis test turning per-node posteriors into support states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import slab_mass, spike_slab_mass


@dataclass(frozen=True)
class BhtWeights:
    w0: np.ndarray
    w1: np.ndarray
    gamma: float


def build_weights(grid, prior):
    """Per-bin ratios f(x|s)/f(x) for the discretized spike-and-slab prior.

    Uses the same discretization as :func:`density.spike_slab_mass`, so
    ``q*w1 + (1-q)*w0 == 1`` holds bin by bin.
    """
    q = prior.q
    mix = spike_slab_mass(grid, q, prior.sigma_x)
    w1 = slab_mass(grid, prior.sigma_x) / mix
    w0 = np.zeros(grid.n_d)
    w0[grid.zero_index] = 1.0 / mix[grid.zero_index]
    return BhtWeights(w0, w1, q / (1.0 - q))


def posterior_odds(posteriors, weights):
    """Prior-stripped odds  sum(w0*post) / sum(w1*post)  per node.

    Because ``w0`` is nonzero only at the zero bin, the numerator is just the
    zero-bin posterior mass scaled by ``w0[zero]``.  A vanishing denominator
    yields ``inf``.
    """
    posteriors = np.atleast_2d(posteriors)
    num = posteriors @ weights.w0
    den = posteriors @ weights.w1
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    return ratio


def detect_states(posteriors, weights, return_flags=False):
    """``s_hat = 1`` iff odds < gamma; ties and empty denominators give 0."""
    ratio = posterior_odds(posteriors, weights)
    states = (ratio < weights.gamma).astype(np.int8)
    if return_flags:
        return states, ~np.isfinite(ratio)
    return states


def detection_rationale_report(posteriors, weights):
    return posterior_odds(posteriors, weights)
