"""Belief propagation over the sensing graph with discretized density messages.

Messages are stored as dense arrays indexed by edge id (the graph's
column-major edge order):

* ``a[e]`` -- signal message from column ``cols[e]`` to row ``rows[e]``
* ``b[e]`` -- measurement message from row ``rows[e]`` to column ``cols[e]``

Both are pmfs over the value grid.  A measurement message is a likelihood in
``x_i``: ``b(x) ~ f(z_j | x_i = x)``.  Since every signal message lives on the
lattice ``k * step``, the other neighbours' sum ``S`` does too.

Two noise models are available:

``grid`` (default)
    the noise is the grid-sampled Gaussian pmf, ``S + n`` is its convolution
    with the sign-adjusted signal messages, and the result is shifted by the
    delta at ``z_j`` (nearest lattice point; a shift past the grid edge wraps
    in circular mode and is counted) and index-reversed: ``b(x) = P_{S+n}(z_j - sign_i * x)``.
``exact``
    ``z_j`` is kept at its fractional offset and the noise density is
    sampled there: ``b(x) = sum_t P_S(t) N(z_j - sign_i * x - t * step)``.

and two convolution modes:

``circular``
    products of FFTs on the ``n_d``-point grid; sums alias modulo the grid
    period (heavy tails on wide inputs).
``linear``
    exact linear convolution on an extended lattice, no wrap-around.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from scipy.special import ndtr

from .density import from_lag_order, to_lag_order

CIRCULAR = "circular"
LINEAR = "linear"
CONV_MODES = (CIRCULAR, LINEAR)
GRID = "grid"
EXACT = "exact"
NOISE_MODELS = (GRID, EXACT)


@dataclass
class MessageSet:
    a: np.ndarray | None
    b: np.ndarray
    posteriors: np.ndarray | None = None
    degenerate: int = 0
    out_of_range: int = 0
    sweeps: int = 0

    def copy(self):
        return MessageSet(None if self.a is None else self.a.copy(), self.b.copy(),
                          None if self.posteriors is None else self.posteriors.copy(),
                          self.degenerate, self.out_of_range, self.sweeps)


@dataclass(frozen=True)
class _EdgeLayout:
    """Padded (node, slot) -> edge id tables; -1 marks padding."""
    col_edges: np.ndarray
    row_edges: np.ndarray
    col_mask: np.ndarray = field(repr=False)
    row_mask: np.ndarray = field(repr=False)


_layout_cache: dict[int, tuple[object, _EdgeLayout]] = {}


def _padded(groups, n_groups, order):
    counts = np.bincount(groups, minlength=n_groups)
    width = int(counts.max()) if counts.size else 0
    table = np.full((n_groups, max(width, 1)), -1, dtype=np.int64)
    sorted_groups = groups[order]
    starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
    slot = np.arange(len(order)) - starts[sorted_groups]
    table[sorted_groups, slot] = order
    return table


def edge_layout(graph):
    key = id(graph)
    hit = _layout_cache.get(key)
    if hit is not None and hit[0] is graph:
        return hit[1]
    col_edges = _padded(graph.cols, graph.n, np.lexsort((graph.rows, graph.cols)))
    row_edges = _padded(graph.rows, graph.m, graph.row_order)
    layout = _EdgeLayout(col_edges, row_edges, col_edges >= 0, row_edges >= 0)
    if len(_layout_cache) > 64:
        _layout_cache.clear()
    _layout_cache[key] = (graph, layout)
    return layout


def _exclusive_products(x, axis=1):
    """For each slot along ``axis``, the product of all other slots."""
    ones_shape = list(x.shape)
    ones_shape[axis] = 1
    ones = np.ones(ones_shape, dtype=x.dtype)
    prefix = np.cumprod(np.concatenate([ones, x], axis=axis), axis=axis)
    rev = np.flip(x, axis=axis)
    suffix = np.flip(np.cumprod(np.concatenate([ones, rev], axis=axis), axis=axis), axis=axis)
    n = x.shape[axis]
    take = np.arange(n)
    return np.take(prefix, take, axis=axis) * np.take(suffix, take + 1, axis=axis)


def _normalize_rows(mass, fallback):
    """Normalize each row; rows with no mass are replaced by ``fallback``.

    Returns ``(normalized, n_degenerate)``.
    """
    mass = np.where(np.isfinite(mass), mass, 0.0)
    np.maximum(mass, 0.0, out=mass)
    sums = mass.sum(axis=-1, keepdims=True)
    bad = ~(sums[..., 0] > 0)
    safe = np.where(sums > 0, sums, 1.0)
    out = mass / safe
    n_bad = int(bad.sum())
    if n_bad:
        out[bad] = fallback
    return out, n_bad


# -- initialization -----------------------------------------------------------

def init_messages(graph, grid):
    b = np.full((graph.n_edges, grid.n_d), 1.0 / grid.n_d)
    return MessageSet(a=None, b=b)


# -- signal messages ----------------------------------------------------------

def update_signal_messages(graph, prior_mass, msgs):
    """``a_{i->j} = eta[prior * prod_{k != j} b_{k->i}]``."""
    lay = edge_layout(graph)
    b = msgs.b[lay.col_edges]                        # (N, Lmax, n_d)
    b[~lay.col_mask] = 1.0
    excl = _exclusive_products(b, axis=1) * prior_mass
    a_pad, n_bad = _normalize_rows(excl[lay.col_mask], prior_mass)
    a = np.empty_like(msgs.b)
    a[lay.col_edges[lay.col_mask]] = a_pad
    msgs.a = a
    msgs.degenerate += n_bad
    return msgs


# -- measurement messages -----------------------------------------------------

def wrapped_noise_kernel(z, sigma_n, grid):
    """``g_j[v] = sum_r N(z_j - (v + r*n_d)*step)`` in lag order, shape (M, n_d)."""
    n_d, step = grid.n_d, grid.step
    period = n_d * step
    v = np.arange(n_d) * step
    d = (np.asarray(z)[:, None] - v) % period
    d = np.where(d >= period / 2, d - period, d)
    reps = int(np.ceil(8.0 * sigma_n / period)) + 1
    out = np.zeros_like(d)
    for r in range(-reps, reps + 1):
        out += np.exp(-0.5 * ((d + r * period) / sigma_n) ** 2)
    return out


def snap_shift(z, grid):
    """Lattice offset of the grid point nearest each ``z_j`` (ties toward the lower one).

    Returns ``(offsets, n_outside)``; offsets beyond the grid are left as they
    are (the circular mode wraps them, the linear mode represents them on its
    extended lattice) and only counted.
    """
    zi = grid.zero_index
    t = np.asarray(z, dtype=np.float64) / grid.step
    k = np.ceil(t - 0.5).astype(np.int64)
    outside = (k < -zi) | (k > zi - 1)
    return k, int(np.count_nonzero(outside))


def noise_pmf(grid, sigma_n):
    """Grid-sampled N(0, sigma_n^2), normalized, in grid ordering."""
    w = np.exp(-0.5 * (grid.points / sigma_n) ** 2)
    return w / w.sum()


def snapped_noise_kernel(z, sigma_n, grid):
    """``g_j[v] = p_n(s_j - v)`` in lag order, with ``s_j`` the snapped ``z_j``."""
    n_d = grid.n_d
    pmf = to_lag_order(noise_pmf(grid, sigma_n))
    shift, _ = snap_shift(z, grid)
    idx = (shift[:, None] - np.arange(n_d)[None, :]) % n_d
    return pmf[idx]


def _measurement_circular(graph, z, sigma_n, grid, a, noise_model=GRID):
    lay = edge_layout(graph)
    n_d = grid.n_d
    spec = np.fft.rfft(to_lag_order(a), axis=-1)     # (E, n_d//2+1)
    neg = graph.signs < 0
    spec[neg] = np.conj(spec[neg])                   # pmf of sign * x_k
    rows_spec = spec[lay.row_edges]                  # (M, Wmax, F)
    rows_spec[~lay.row_mask] = 1.0
    excl = _exclusive_products(rows_spec, axis=1)    # transform of P_S per edge
    kernel = snapped_noise_kernel if noise_model == GRID else wrapped_noise_kernel
    kern = np.fft.rfft(kernel(z, sigma_n, grid), axis=-1)   # (M, F)
    out_spec = np.conj(excl) * kern[:, None, :]      # correlation with the kernel
    edge_ids = lay.row_edges[lay.row_mask]
    out_spec = out_spec[lay.row_mask]
    flip = graph.signs[edge_ids] < 0
    out_spec[flip] = np.conj(out_spec[flip])         # evaluate at sign_i * x
    lag = np.fft.irfft(out_spec, n=n_d, axis=-1)
    b = np.empty((graph.n_edges, n_d))
    b[edge_ids] = from_lag_order(lag)
    return b


def _noise_on_lattice(z_j, sigma_n, grid, lo, hi, noise_model=GRID):
    """``g(v)`` for lattice offsets v in [lo, hi]; see the module docstring."""
    v = np.arange(lo, hi + 1)
    if noise_model == EXACT:
        return np.exp(-0.5 * ((z_j - v * grid.step) / sigma_n) ** 2)
    zi = grid.zero_index
    shift, _ = snap_shift(np.array([z_j]), grid)
    w = shift[0] - v                                   # noise offset
    inside = (w >= -zi) & (w <= zi - 1)
    out = np.zeros(v.size)
    out[inside] = noise_pmf(grid, sigma_n)[w[inside] + zi]
    return out


def _measurement_linear(graph, z, sigma_n, grid, a, noise_model=GRID):
    n_d, zi = grid.n_d, grid.zero_index
    b = np.empty((graph.n_edges, n_d))
    adj_a = np.where(graph.signs[:, None] < 0, a[:, ::-1], a)
    # a reversed pmf covers offsets [-(zi-1), zi]; a plain one [-zi, zi-1]
    lo_off = np.where(graph.signs < 0, -(zi - 1), -zi)
    ptr = graph.row_ptr
    order = graph.row_order
    for j in range(graph.m):
        edges = order[ptr[j]:ptr[j + 1]]
        for pos, e in enumerate(edges):
            dist = np.ones(1)
            t_lo = 0
            for other_pos, k in enumerate(edges):
                if other_pos == pos:
                    continue
                dist = np.convolve(dist, adj_a[k])
                t_lo += lo_off[k]
            t_hi = t_lo + len(dist) - 1
            # b(u) = sum_t P_S(t) g(u + t) for lattice offsets u of x_i * sign_i
            g = _noise_on_lattice(z[j], sigma_n, grid, t_lo - zi, t_hi + zi, noise_model)
            vals = np.correlate(g, dist, mode="valid")   # u = -zi .. zi
            b[e] = vals[::-1][:n_d] if graph.signs[e] < 0 else vals[:n_d]
    return b


def update_measurement_messages(graph, z, sigma_n, grid, msgs, conv_mode=CIRCULAR, damping=0.0,
                                noise_model=GRID):
    if noise_model not in NOISE_MODELS:
        raise ValueError(f"unknown noise_model {noise_model!r}")
    if msgs.a is None:
        raise ValueError("signal messages have not been computed")
    if not sigma_n > 0:
        raise ValueError("measurement messages need sigma_n > 0")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (graph.m,):
        raise ValueError(f"expected z of length {graph.m}")
    if conv_mode == CIRCULAR:
        raw = _measurement_circular(graph, z, sigma_n, grid, msgs.a, noise_model)
    elif conv_mode == LINEAR:
        raw = _measurement_linear(graph, z, sigma_n, grid, msgs.a, noise_model)
    else:
        raise ValueError(f"unknown conv_mode {conv_mode!r}")
    uniform = np.full(grid.n_d, 1.0 / grid.n_d)
    b, n_bad = _normalize_rows(raw, uniform)
    if damping:
        b = (1.0 - damping) * b + damping * msgs.b
    msgs.b = b
    msgs.degenerate += n_bad
    msgs.out_of_range += snap_shift(z, grid)[1]
    return msgs


def measurement_message_reference(z_j, sigma_n, grid, sign_i, others, noise_model=GRID):
    """One circular measurement message by explicit shift-and-reverse sums.

    ``others`` is a list of ``(sign_k, a_k)`` pairs.  Used to cross-check the
    transform-domain path.
    """
    n_d = grid.n_d

    def conv(dist, p):
        nxt = np.zeros(n_d)
        for s in range(n_d):
            nxt += dist[s] * np.roll(p, s)
        return nxt

    dist = np.zeros(n_d)
    dist[0] = 1.0
    for sign_k, a_k in others:
        p = to_lag_order(a_k)
        if sign_k < 0:
            p = np.roll(p[::-1], 1)
        dist = conv(dist, p)
    if noise_model == GRID:
        # density of S + n, shifted by the delta at z_j, then index-reversed
        dist = conv(dist, to_lag_order(noise_pmf(grid, sigma_n)))
        shift, _ = snap_shift(np.array([z_j]), grid)
        out = np.roll(dist, -int(shift[0]))[::-1]
        out = np.roll(out, 1)
    else:
        g = wrapped_noise_kernel(np.array([z_j]), sigma_n, grid)[0]
        out = np.array([sum(dist[t] * g[(u + t) % n_d] for t in range(n_d)) for u in range(n_d)])
    if sign_i < 0:
        out = np.roll(out[::-1], 1)
    out = from_lag_order(out)
    return out / out.sum()


def measurement_density(grid, sigma_n, x_i, sign_i, others, noise_model=GRID):
    """Distribution of ``z_j`` given a grid value ``x_i``, binned to the lattice.

    ``others`` is a list of ``(sign_k, a_k)`` pairs for the other neighbours.
    Returns ``(offsets, pmf)`` where ``pmf[r]`` is the probability that ``z_j``
    lies nearest to lattice point ``offsets[r] * step`` (no wrap-around).
    With the ``grid`` model this is exactly ``P_{S+n}``; with ``exact`` it is
    the Gaussian integrated over each lattice bin.
    """
    zi, step = grid.zero_index, grid.step
    dist = np.ones(1)
    lo = 0
    for sign_k, a_k in others:
        p = np.asarray(a_k, dtype=np.float64)
        if sign_k < 0:
            p, lo = p[::-1], lo - (zi - 1)
        else:
            lo -= zi
        dist = np.convolve(dist, p)
    k_i, _ = snap_shift(np.array([x_i]), grid)
    lo += int(sign_i * k_i[0])
    if noise_model == GRID:
        out = np.convolve(dist, noise_pmf(grid, sigma_n))
        return np.arange(lo - zi, lo - zi + out.size), out
    pad = int(np.ceil(8 * sigma_n / step)) + 1
    offsets = np.arange(lo - pad, lo + dist.size + pad)
    t = np.arange(lo, lo + dist.size) * step
    edges = (offsets[:, None] + 0.5) * step - t[None, :]
    cell = ndtr(edges / sigma_n) - ndtr((edges - step) / sigma_n)
    return offsets, cell @ dist


# -- posteriors ---------------------------------------------------------------

def compute_posteriors(graph, prior_mass, msgs):
    """``eta[prior * prod_j b_{j->i}]`` over all incoming measurement messages."""
    lay = edge_layout(graph)
    b = msgs.b[lay.col_edges]
    b[~lay.col_mask] = 1.0
    post, n_bad = _normalize_rows(np.prod(b, axis=1) * prior_mass, prior_mass)
    msgs.posteriors = post
    msgs.degenerate += n_bad
    return msgs


def run_iteration(graph, z, sigma_n, grid, prior_mass, msgs, conv_mode=CIRCULAR, damping=0.0,
                  noise_model=GRID):
    """One flooding sweep: all signal messages, all measurement messages, posteriors."""
    update_signal_messages(graph, prior_mass, msgs)
    update_measurement_messages(graph, z, sigma_n, grid, msgs, conv_mode, damping, noise_model)
    compute_posteriors(graph, prior_mass, msgs)
    msgs.sweeps += 1
    return msgs


def dump_posteriors(path, grid, posteriors):
    """CSV dump ``node,x_k,mass`` for plotting posterior evolution."""
    with open(path, "w", newline="\n") as fh:
        fh.write("node,x_k,mass\n")
        for i, row in enumerate(posteriors):
            for x, w in zip(grid.points, row):
                fh.write(f"{i},{float(x)!r},{float(w)!r}\n")
