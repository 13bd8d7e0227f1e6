"""Detection-directed MMSE estimation on a detected support."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve


def mmse_on_support(graph_supp, z, prior):
    """Solve ``(I/sx^2 + P'P/sn^2) x = P'z/sn^2`` by Cholesky.

    With ``sigma_n == 0`` the noiseless limit ``(P'P + (sn/sx)^2 I)`` reduces
    to a minimum-norm least-squares solve.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (graph_supp.m,):
        raise ValueError(f"expected z of length {graph_supp.m}")
    if graph_supp.n == 0:
        raise ValueError("empty support")
    phi = graph_supp.to_dense()
    if prior.sigma_n == 0:
        return np.linalg.lstsq(phi, z, rcond=None)[0]
    # scaled by sigma_n^2: (P'P + r I) x = P'z with r = (sn/sx)^2
    ridge = (prior.sigma_n / prior.sigma_x) ** 2
    gram = phi.T @ phi
    gram[np.diag_indices_from(gram)] += ridge
    try:
        return cho_solve(cho_factor(gram, lower=True), phi.T @ z)
    except np.linalg.LinAlgError:
        # ridge lost to rounding on a badly overcomplete support
        return np.linalg.lstsq(gram, phi.T @ z, rcond=None)[0]


def mmse_oracle_dense(graph_supp, z, prior):
    """Dense explicit-inverse version of :func:`mmse_on_support` (test oracle)."""
    phi = graph_supp.to_dense()
    k = phi.shape[1]
    if k > 64:
        raise ValueError("dense oracle is for small supports only (K <= 64)")
    sn2, sx2 = prior.sigma_n ** 2, prior.sigma_x ** 2
    system = np.eye(k) / sx2 + phi.T @ phi / sn2
    return np.linalg.inv(system) @ (phi.T @ np.asarray(z, dtype=np.float64)) / sn2


def embed(states, values_supp):
    states = np.asarray(states)
    values_supp = np.asarray(values_supp, dtype=np.float64)
    support = np.flatnonzero(states)
    if support.size != values_supp.size:
        raise ValueError(f"{support.size} detected states but {values_supp.size} values")
    out = np.zeros(states.shape, dtype=np.float64)
    out[support] = values_supp
    return out


def map_objective_gradient(graph_supp, z, prior, x):
    """Gradient of ||z - P x||^2/sn^2 + ||x||^2/sx^2."""
    phi = graph_supp.to_dense()
    r = phi @ x - z
    return 2.0 * phi.T @ r / prior.sigma_n ** 2 + 2.0 * x / prior.sigma_x ** 2
