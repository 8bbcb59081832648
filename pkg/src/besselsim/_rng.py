"""Counter-based normal variates keyed to dyadic path nodes.

Every Brownian value in this package is a pure function of (seed, node id):
a splitmix64-style hash feeds a Box-Muller transform.  The same jitted
functions back both the Python-facing path API and the SDE integrator
kernels, so values are bit-identical across call sites and independent of
query order.

Node ids: the whole-interval endpoint W(horizon) is node 1; the midpoint of
dyadic cell ``c`` at level ``lev`` (cell width horizon/2**lev) has id
``2**(lev+1) + c``.  Levels up to 52 fit comfortably in uint64.
"""

import math

import numba as nb
import numpy as np

_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)
_SALTM = np.uint64(0xD1342543DE82EF95)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * math.pi

ROOT_NODE = 1


@nb.njit(cache=True, inline="always")
def _mix(z):
    z = z + _C1
    z = (z ^ (z >> np.uint64(30))) * _C2
    z = (z ^ (z >> np.uint64(27))) * _C3
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, inline="always")
def _hash(seed, node, salt):
    return _mix(_mix(node + salt * _SALTM) ^ seed)


@nb.njit(cache=True)
def node_uniform(seed, node, salt):
    """Uniform in [0, 1) for auxiliary per-node decisions."""
    return (_hash(seed, node, salt) >> np.uint64(11)) * _INV53


@nb.njit(cache=True)
def node_normal(seed, node):
    """Standard normal attached to a dyadic node."""
    u1 = ((_hash(seed, node, np.uint64(1)) >> np.uint64(11)) + np.uint64(1)) * _INV53
    u2 = (_hash(seed, node, np.uint64(2)) >> np.uint64(11)) * _INV53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@nb.njit(cache=True, inline="always")
def root_value(seed, horizon):
    return math.sqrt(horizon) * node_normal(seed, np.uint64(ROOT_NODE))


@nb.njit(cache=True, inline="always")
def mid_node(lev, cell):
    return np.uint64((1 << (lev + 1)) + cell)


@nb.njit(cache=True, inline="always")
def bridge_mid(seed, lev, cell, width, w_left, w_right):
    """Brownian-bridge midpoint of cell (lev, cell) of the given width."""
    sigma = math.sqrt(0.25 * width)
    return 0.5 * (w_left + w_right) + sigma * node_normal(seed, mid_node(lev, cell))


@nb.njit(cache=True)
def fill_brownian(seed, level, horizon):
    """Path values on the uniform dyadic grid, t_i = i*horizon/2**level.

    Built midpoint-by-midpoint so the result agrees bit-for-bit with
    on-demand descent through the same nodes.
    """
    n = 1 << level
    w = np.empty(n + 1)
    w[0] = 0.0
    w[n] = root_value(seed, horizon)
    step = n
    lev = 0
    width = horizon
    while step > 1:
        half = step >> 1
        cell = 0
        for i in range(half, n, step):
            w[i] = bridge_mid(seed, lev, cell, width, w[i - half], w[i + half])
            cell += 1
        step = half
        lev += 1
        width *= 0.5
    return w


@nb.njit(cache=True)
def dyadic_value(seed, level, j, horizon):
    """Path value at t = j*horizon/2**level via root-to-node descent."""
    if j <= 0:
        return 0.0
    n = 1 << level
    if j >= n:
        return root_value(seed, horizon)
    lev = 0
    cell = 0
    lo = 0
    hi = n
    wl = 0.0
    wr = root_value(seed, horizon)
    width = horizon
    while True:
        mid = (lo + hi) >> 1
        wm = bridge_mid(seed, lev, cell, width, wl, wr)
        if j == mid:
            return wm
        lev += 1
        width *= 0.5
        if j < mid:
            hi = mid
            wr = wm
            cell = 2 * cell
        else:
            lo = mid
            wl = wm
            cell = 2 * cell + 1
