"""Discretized probability densities on a shared uniform value grid.

All densities are probability mass vectors (pmfs) over the grid points
``x_k = (k - n_d/2) * step``, so zero sits exactly on index ``n_d/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class DegenerateMessage(ValueError):
    """Raised when a density has no mass left to normalize."""


def is_power_of_2(x):
    return x > 0 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class ValueGrid:
    n_d: int
    half_range: float

    def __post_init__(self):
        if not is_power_of_2(self.n_d) or self.n_d < 2:
            raise ValueError(f"n_d must be a power of two >= 2, got {self.n_d}")
        if not self.half_range > 0:
            raise ValueError("half_range must be positive")

    @classmethod
    def for_prior(cls, n_d, sigma_x):
        """Grid spanning the clipping range +-3 sigma_x."""
        return cls(n_d, 3.0 * sigma_x)

    @property
    def step(self):
        return 2.0 * self.half_range / self.n_d

    @property
    def zero_index(self):
        return self.n_d // 2

    @cached_property
    def points(self):
        return (np.arange(self.n_d) - self.zero_index) * self.step

    def nearest_index(self, value):
        """Index of the grid point closest to ``value``; ties go to the lower index.

        Returns ``(index, clamped)``.
        """
        t = (value - self.points[0]) / self.step
        k = int(np.ceil(t - 0.5))
        if k < 0:
            return 0, True
        if k > self.n_d - 1:
            return self.n_d - 1, True
        return k, False


@dataclass
class DiscreteDensity:
    grid: ValueGrid
    mass: np.ndarray
    clamped: int = field(default=0, compare=False)

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=np.float64)
        if self.mass.shape != (self.grid.n_d,):
            raise ValueError(f"mass must have shape ({self.grid.n_d},), got {self.mass.shape}")
        if np.any(self.mass < 0):
            raise ValueError("mass must be nonnegative")

    def total(self):
        return float(self.mass.sum())

    def to_csv(self, path):
        """Debug dump as ``x_k,mass`` rows."""
        with open(path, "w", newline="\n") as fh:
            fh.write("x_k,mass\n")
            for x, w in zip(self.grid.points, self.mass):
                fh.write(f"{float(x)!r},{float(w)!r}\n")


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError("densities live on different grids")


# -- constructors -------------------------------------------------------------

def slab_mass(grid, sigma_x):
    """Discretized N(0, sigma_x^2) restricted to the grid, normalized."""
    w = np.exp(-0.5 * (grid.points / sigma_x) ** 2)
    return w / w.sum()


def spike_slab_mass(grid, q, sigma_x):
    """Mixture pmf ``q * slab + (1 - q) * spike``.

    The slab is normalized on its own before mixing so that the mixture
    weights are exact bin by bin (the BHT weights rely on this).
    """
    mass = q * slab_mass(grid, sigma_x)
    mass[grid.zero_index] += 1.0 - q
    return mass


def spike_slab_prior(grid, prior):
    return DiscreteDensity(grid, spike_slab_mass(grid, prior.q, prior.sigma_x))


def gaussian(grid, mean, sigma):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    w = np.exp(-0.5 * ((grid.points - mean) / sigma) ** 2)
    s = w.sum()
    if s == 0.0:
        raise DegenerateMessage("gaussian has no mass on the grid")
    return DiscreteDensity(grid, w / s)


def delta_at(grid, value):
    """Unit mass on the grid point nearest ``value``.

    Out-of-range values clamp to the boundary point; ``clamped`` on the
    result counts the event.
    """
    if not np.isfinite(value):
        raise ValueError("value must be finite")
    k, clamped = grid.nearest_index(value)
    mass = np.zeros(grid.n_d)
    mass[k] = 1.0
    return DiscreteDensity(grid, mass, clamped=int(clamped))


def uniform(grid):
    return DiscreteDensity(grid, np.full(grid.n_d, 1.0 / grid.n_d))


# -- algebra ------------------------------------------------------------------

def normalize(d):
    s = d.mass.sum()
    if not s > 0:
        raise DegenerateMessage("degenerate message: no mass to normalize")
    return DiscreteDensity(d.grid, d.mass / s, clamped=d.clamped)


def product(a, b):
    _check_same_grid(a, b)
    return DiscreteDensity(a.grid, a.mass * b.mass)


def mirror_mass(mass):
    """Circular reflection about the zero index along the last axis.

    Index k maps to (n_d - k) mod n_d, i.e. value x -> -x with the one-sided
    endpoint mapped onto itself.
    """
    return np.roll(mass[..., ::-1], 1, axis=-1)


def mirror(d):
    return DiscreteDensity(d.grid, mirror_mass(d.mass))


def convolve_direct(a, b):
    """Linear convolution recentered on the grid.

    Mass that lands outside the grid is piled onto the nearest boundary bin.
    """
    _check_same_grid(a, b)
    n_d = a.grid.n_d
    zi = a.grid.zero_index
    full = np.convolve(a.mass, b.mass)
    # full[t] sits at lattice offset t - 2*zi; grid index k holds offset k - zi
    out = full[zi:zi + n_d].copy()
    out[0] += full[:zi].sum()
    out[-1] += full[zi + n_d:].sum()
    return DiscreteDensity(a.grid, out)


def to_lag_order(mass):
    """Reorder so that the zero-value bin is index 0 (circular lag order)."""
    return np.fft.ifftshift(mass, axes=-1)


def from_lag_order(mass):
    return np.fft.fftshift(mass, axes=-1)


def circular_convolve_masses(masses):
    """Circular convolution of a stack of pmfs (grid ordering, last axis).

    ``masses`` has shape (k, n_d); returns the n-ary circular convolution in
    grid ordering.
    """
    masses = np.atleast_2d(masses)
    spec = np.fft.rfft(to_lag_order(masses), axis=-1)
    out = np.fft.irfft(np.prod(spec, axis=0), n=masses.shape[-1])
    out = from_lag_order(out)
    np.maximum(out, 0.0, out=out)
    return out


def convolve_fft(*densities):
    """Circular (transform-based) convolution of two or more densities."""
    if len(densities) < 2:
        raise ValueError("need at least two densities")
    first = densities[0]
    for d in densities[1:]:
        _check_same_grid(first, d)
    out = circular_convolve_masses(np.stack([d.mass for d in densities]))
    return DiscreteDensity(first.grid, out)


def moments(d, tol=1e-9):
    s = d.mass.sum()
    if abs(s - 1.0) > tol:
        raise ValueError(f"density is not normalized (sum={s})")
    x = d.grid.points
    mean = float(np.dot(x, d.mass))
    var = float(np.dot((x - mean) ** 2, d.mass))
    return mean, var


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
