"""Deterministic, refinable Brownian paths shared by coupled diffusions.

A path is defined by (seed, horizon): the value at any dyadic time is a pure
function of those, realized by Levy midpoint construction with counter-based
variates (see ``_rng``).  Querying never changes already-determined values,
so bisection loops and whole diffusion families can re-read one realization
at arbitrary resolutions in any order.

Arbitrary times snap to the finest dyadic level (default 46, i.e. a relative
time resolution of 1.4e-14).
"""

from __future__ import annotations

import math
import threading

import numpy as np

from . import _rng

DEFAULT_FINEST_LEVEL = 46


class BrownianPath:
    """One standard Brownian motion on [0, horizon].

    Thread-safety: concurrent ``sample_at`` calls are serialized by an
    internal lock; distinct paths are fully independent.
    """

    def __init__(self, seed: int, horizon: float, finest_level: int = DEFAULT_FINEST_LEVEL):
        if not horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {horizon}")
        if not 1 <= finest_level <= 52:
            raise ValueError(f"finest_level must be in [1, 52], got {finest_level}")
        self.seed = np.uint64(seed)
        self.horizon = float(horizon)
        self.finest_level = int(finest_level)
        self._w_end = float(_rng.root_value(self.seed, self.horizon))
        # public record of determined points, keyed by (snapped) time
        self.cache: dict[float, float] = {0.0: 0.0, self.horizon: self._w_end}
        self._nodes: dict[int, float] = {_rng.ROOT_NODE: self._w_end}
        self._lock = threading.Lock()

    def _snap(self, t: float) -> tuple[int, int]:
        """Snap t to the finest dyadic grid, reduced to canonical (level, j)."""
        n = 1 << self.finest_level
        j = round(t / self.horizon * n)
        j = min(max(j, 0), n)
        level = self.finest_level
        while j and not j & 1:
            j >>= 1
            level -= 1
        return level, j

    def _descend(self, level: int, j: int) -> float:
        """Value at the canonical dyadic node (level, j), j odd; caches midpoints."""
        if j == 0:
            return 0.0
        if level == 0:
            return self._w_end
        lev, cell = 0, 0
        lo, hi = 0, 1 << level
        wl, wr = 0.0, self._w_end
        width = self.horizon
        while True:
            mid = (lo + hi) >> 1
            node = int(_rng.mid_node(lev, cell))
            wm = self._nodes.get(node)
            if wm is None:
                wm = float(_rng.bridge_mid(self.seed, lev, cell, width, wl, wr))
                self._nodes[node] = wm
            if j == mid:
                return wm
            lev += 1
            width *= 0.5
            if j < mid:
                hi, wr, cell = mid, wm, 2 * cell
            else:
                lo, wl, cell = mid, wm, 2 * cell + 1

    def sample_at(self, t: float) -> float:
        """Path value at t (snapped to the finest dyadic grid)."""
        if not 0.0 <= t <= self.horizon * (1.0 + 1e-12):
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        with self._lock:
            level, j = self._snap(t)
            w = self._descend(level, j)
            self.cache[j * self.horizon / (1 << level) if j else 0.0] = w
            return w

    def increment(self, s: float, t: float) -> float:
        """W(t) - W(s) for 0 <= s <= t <= horizon."""
        if s > t:
            raise ValueError(f"reversed interval: s={s} > t={t}")
        return self.sample_at(t) - self.sample_at(s)

    def values_on_grid(self, level: int) -> np.ndarray:
        """All values on the uniform dyadic grid of 2**level cells.

        Identical to repeated sample_at on those times, computed in bulk.
        """
        if not 1 <= level <= self.finest_level:
            raise ValueError(f"level must be in [1, {self.finest_level}]")
        return _rng.fill_brownian(self.seed, level, self.horizon)

    def scaled(self, time_factor: float) -> "ScaledBrownianPath":
        """Brownian view B(s) = W(time_factor*s)/sqrt(time_factor).

        Realizes time changes such as B(s) = W(4*beta*s)/(2*sqrt(beta)) that
        couple a diffusion and its rescaled version on one noise source.
        """
        return ScaledBrownianPath(self, time_factor)


class ScaledBrownianPath:
    """Standard-Brownian view of a base path under a dyadic-free time change."""

    def __init__(self, base: BrownianPath, time_factor: float):
        if not time_factor > 0.0:
            raise ValueError(f"time_factor must be positive, got {time_factor}")
        self.base = base
        self.time_factor = float(time_factor)
        self.horizon = base.horizon / self.time_factor
        self._amp = 1.0 / math.sqrt(self.time_factor)

    def sample_at(self, s: float) -> float:
        return self.base.sample_at(s * self.time_factor) * self._amp

    def increment(self, s: float, t: float) -> float:
        if s > t:
            raise ValueError(f"reversed interval: s={s} > t={t}")
        return self.sample_at(t) - self.sample_at(s)


def kernel_view(path) -> tuple[np.uint64, float, float, float]:
    """(seed, stored horizon, time_factor, amplitude) for integrator kernels.

    Kernels walk the stored path's dyadic tree; a scaled view contributes its
    time change and 1/sqrt scaling, so coupled modules read one realization.
    """
    if isinstance(path, ScaledBrownianPath):
        return path.base.seed, path.base.horizon, path.time_factor, path._amp
    return path.seed, path.horizon, 1.0, 1.0
