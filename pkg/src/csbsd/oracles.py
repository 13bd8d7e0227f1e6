"""Brute-force reference computations used by the test suite and ``selftest``.

These are deliberately slow and independent of the fast paths they check.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from . import bp
from .density import ValueGrid, spike_slab_mass, total_variation
from .estimation import mmse_on_support, mmse_oracle_dense
from .model import PriorParams
from .sensing import from_dense, matvec


def random_tree_graph(rng, n, m):
    """Random connected cycle-free bipartite graph with ``n`` columns and ``m`` rows."""
    if n < 1 or m < 1:
        raise ValueError("need at least one column and one row")
    phi = np.zeros((m, n))
    cols_in, rows_in = [0], []
    pending = [("c", i) for i in range(1, n)] + [("r", j) for j in range(m)]
    rng.shuffle(pending)
    while pending:
        for idx, (kind, k) in enumerate(pending):
            if kind == "r" or rows_in:
                break
        kind, k = pending.pop(idx)
        if kind == "r":
            phi[k, rng.choice(cols_in)] = rng.choice((-1.0, 1.0))
            rows_in.append(k)
        else:
            phi[rng.choice(rows_in), k] = rng.choice((-1.0, 1.0))
            cols_in.append(k)
    return from_dense(phi)


def tree_diameter_sweeps(graph):
    """Upper bound on the column-to-column hops of any path (number of columns)."""
    return graph.n


def exhaustive_posteriors(graph, z, sigma_n, grid, prior_mass, noise_model=bp.GRID):
    """Exact marginals of x on the grid by enumerating all n_d**N configurations.

    With the ``grid`` noise model each ``z_j`` is snapped to the grid and the
    noise is the grid-sampled pmf (no wrap-around); with ``exact`` the
    continuous Gaussian likelihood is used.
    """
    n, n_d = graph.n, grid.n_d
    if n_d ** n > 2 ** 22:
        raise ValueError("configuration space too large for enumeration")
    phi = graph.to_dense()
    idx = np.indices((n_d,) * n).reshape(n, -1)               # (N, n_d**N)
    x = grid.points[idx]
    log_p = np.log(prior_mass)[idx].sum(axis=0)
    if noise_model == bp.EXACT:
        resid = np.asarray(z)[:, None] - phi @ x
        log_p += (-0.5 * (resid / sigma_n) ** 2).sum(axis=0)
    else:
        zi = grid.zero_index
        snapped, _ = bp.snap_shift(z, grid)
        w = snapped[:, None] - (phi @ (idx - zi)).astype(np.int64)    # noise offsets
        inside = (w >= -zi) & (w <= zi - 1)
        with np.errstate(divide="ignore"):
            log_pn = np.log(bp.noise_pmf(grid, sigma_n))
        log_p += np.where(inside, log_pn[np.clip(w + zi, 0, grid.n_d - 1)], -np.inf).sum(axis=0)
    log_p -= logsumexp(log_p)
    p = np.exp(log_p)
    out = np.zeros((n, n_d))
    for i in range(n):
        out[i] = np.bincount(idx[i], weights=p, minlength=n_d)
    return out


def tree_instance(rng, n_max=5, m_max=4, n_d=16, q=0.3, sigma_x=1.0, sigma_n=0.4):
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    graph = random_tree_graph(rng, n, m)
    grid = ValueGrid.for_prior(n_d, sigma_x)
    prior_mass = spike_slab_mass(grid, q, sigma_x)
    x = grid.points[rng.choice(n_d, size=n, p=prior_mass)]
    z = matvec(graph, x) + sigma_n * rng.standard_normal(graph.m)
    return graph, z, grid, prior_mass, sigma_n


def check_tree_posteriors(rng, conv_mode=bp.LINEAR, noise_model=bp.GRID, **kw):
    """Max total variation between BP and exhaustive posteriors on one tree instance."""
    graph, z, grid, prior_mass, sigma_n = tree_instance(rng, **kw)
    msgs = bp.init_messages(graph, grid)
    for _ in range(tree_diameter_sweeps(graph) + 1):
        bp.run_iteration(graph, z, sigma_n, grid, prior_mass, msgs, conv_mode=conv_mode,
                         noise_model=noise_model)
    exact = exhaustive_posteriors(graph, z, sigma_n, grid, prior_mass, noise_model)
    tv = max(total_variation(p, e) for p, e in zip(msgs.posteriors, exact))
    return tv, msgs.degenerate


def check_mmse_equivalence(rng, k_max=16):
    """Relative disagreement between the Cholesky solve and the dense inverse."""
    k = int(rng.integers(1, k_max + 1))
    m = int(rng.integers(k, 3 * k + 4))
    l = int(rng.integers(1, min(m, 4) + 1))
    phi = np.zeros((m, k))
    for c in range(k):
        phi[rng.choice(m, size=l, replace=False), c] = rng.choice((-1.0, 1.0), size=l)
    graph = from_dense(phi)
    prior = PriorParams(0.05, float(rng.uniform(1, 20)), float(rng.uniform(0.05, 3)))
    z = rng.normal(0, 5, m)
    fast = mmse_on_support(graph, z, prior)
    slow = mmse_oracle_dense(graph, z, prior)
    return float(np.linalg.norm(fast - slow) / max(np.linalg.norm(slow), 1e-300))


def run_selftest(seed=0, n_tree=20, n_mmse=100, log=print):
    """Run the oracle suites; returns True when every check passes."""
    rng = np.random.default_rng(seed)
    ok = True

    for noise_model in bp.NOISE_MODELS:
        worst = 0.0
        for _ in range(n_tree):
            tv, _ = check_tree_posteriors(rng, noise_model=noise_model)
            worst = max(worst, tv)
        passed = worst < 1e-6
        ok &= passed
        log(f"{'PASS' if passed else 'FAIL'} exhaustive posterior oracle ({noise_model} noise): "
            f"max TV {worst:.3e} over {n_tree} trees")

    worst = max(check_mmse_equivalence(rng) for _ in range(n_mmse))
    passed = worst < 1e-10
    ok &= passed
    log(f"{'PASS' if passed else 'FAIL'} dense MMSE oracle: max rel err {worst:.3e} over {n_mmse} instances")

    grid = ValueGrid(16, 3.0)
    worst = 0.0
    for noise_model in bp.NOISE_MODELS * 3:
        w = int(rng.integers(1, 4))
        others = [(float(rng.choice((-1, 1))), rng.dirichlet(np.ones(16))) for _ in range(w)]
        graph = from_dense(np.array([[s for s, _ in others] + [float(rng.choice((-1, 1)))]]))
        msgs = bp.MessageSet(a=np.stack([a for _, a in others] + [np.full(16, 1 / 16)]),
                             b=np.zeros((w + 1, 16)))
        z = np.array([rng.normal(0, 2)])
        bp.update_measurement_messages(graph, z, 0.5, grid, msgs, noise_model=noise_model)
        ref = bp.measurement_message_reference(z[0], 0.5, grid, graph.signs[w], others, noise_model)
        worst = max(worst, float(np.abs(msgs.b[w] - ref).max()))
    passed = worst < 1e-10
    ok &= passed
    log(f"{'PASS' if passed else 'FAIL'} transform vs shift-and-reverse measurement message: max abs {worst:.3e}")
    return bool(ok)
