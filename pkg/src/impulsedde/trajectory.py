"""Piecewise left-continuous trajectories on [-r, b] and delayed-state segments.

A trajectory is stored as node blocks separated by the impulse schedule. Values
are left-continuous at impulse times; the post-jump value at each t_k is kept
separately and doubles as the first node of the following block.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = ["HistorySegment", "PiecewiseTrajectory", "sigma_diff"]

_EDGE_TOL = 1e-9


def _as_nodes(times, values, n):
    t = np.ascontiguousarray(np.asarray(times, dtype=float))
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None] if n == 1 else v.reshape(len(t), n)
    if t.ndim != 1 or v.shape != (len(t), n):
        raise ValueError(f"block nodes must be (L,) times with (L, {n}) values")
    if len(t) < 2 or np.any(np.diff(t) <= 0.0):
        raise ValueError("block node times must be strictly increasing with >= 2 nodes")
    return t, np.ascontiguousarray(v)


def _interp_sorted(grid, vals, ts):
    """Linear interpolation of (grid, vals) at query times, vectorized.

    `grid` may contain repeated entries (zero-width intervals at jumps); exact
    hits resolve to the first occurrence, interior queries interpolate from the
    last occurrence below, which realizes the left-continuity convention.
    """
    ts = np.asarray(ts, dtype=float)
    idx = np.searchsorted(grid, ts, side="left")
    idx = np.clip(idx, 0, len(grid) - 1)
    exact = grid[idx] == ts
    out = np.empty(ts.shape + (vals.shape[1],))
    out[exact] = vals[idx[exact]]
    rest = ~exact
    if np.any(rest):
        hi = np.clip(idx[rest], 1, len(grid) - 1)
        lo = hi - 1
        tq = ts[rest]
        span = grid[hi] - grid[lo]
        frac = np.where(span > 0.0, (tq - grid[lo]) / np.where(span > 0.0, span, 1.0), 0.0)
        # queries beyond the last node (within tolerance) clamp to the end value
        frac = np.clip(frac, 0.0, 1.0)
        out[rest] = vals[lo] + frac[:, None] * (vals[hi] - vals[lo])
    return out


@dataclass(frozen=True)
class HistorySegment:
    """Sampled delayed state: theta -> w(t + theta) for theta in [-r, 0].

    Evaluation between samples is linear; the sample grid runs from -r to 0.
    """

    theta_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(np.asarray(self.theta_grid, dtype=float))
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if g.ndim != 1 or len(g) < 2 or v.shape[0] != len(g):
            raise ValueError("theta_grid and values must be parallel with >= 2 samples")
        if np.any(np.diff(g) <= 0.0):
            raise ValueError("theta_grid must be strictly increasing")
        if g[0] >= 0.0 or g[-1] != 0.0:
            raise ValueError("theta_grid must start at -r < 0 and end exactly at 0")
        object.__setattr__(self, "theta_grid", g)
        object.__setattr__(self, "values", np.ascontiguousarray(v))

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def delay(self) -> float:
        return -float(self.theta_grid[0])

    def __call__(self, theta):
        g = self.theta_grid
        v = self.values
        if np.ndim(theta) == 0:
            t = float(theta)
            pad = _EDGE_TOL * (1.0 + self.delay)
            if t < g[0] - pad or t > pad:
                raise ValueError(f"theta={t} outside [{g[0]}, 0]")
            i = np.searchsorted(g, t, side="right") - 1
            if i < 0:
                return v[0].copy()
            if i >= len(g) - 1:
                return v[-1].copy()
            frac = (t - g[i]) / (g[i + 1] - g[i])
            return v[i] + frac * (v[i + 1] - v[i])
        theta = np.asarray(theta, dtype=float)
        pad = _EDGE_TOL * (1.0 + self.delay)
        if np.any(theta < g[0] - pad) or np.any(theta > pad):
            raise ValueError("theta values outside [-r, 0]")
        return _interp_sorted(g, v, np.clip(theta, g[0], 0.0))

    def sup_norm(self) -> float:
        """Sup norm over the samples (the C([-r,0]) norm on this grid)."""
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class PiecewiseTrajectory:
    """Left-continuous piecewise solution with recorded jumps.

    blocks[0] is the history block on [-r, 0]; blocks[j] for j >= 1 covers
    [t_{j-1}, t_j] with t_0 = 0 and the final block ending at the horizon.
    A partially built trajectory (prefix of the full block list) is allowed;
    `complete` tells the two apart. right_limits[k] is w(t_k^+) and equals the
    first node value of block k+2 once that block exists.
    """

    dimension: int
    delay: float
    horizon: float
    impulse_times: np.ndarray
    blocks: tuple
    right_limits: np.ndarray

    def __post_init__(self):
        n = int(self.dimension)
        if n < 1:
            raise ValueError("dimension must be >= 1")
        tk = np.ascontiguousarray(np.asarray(self.impulse_times, dtype=float))
        object.__setattr__(self, "impulse_times", tk)
        object.__setattr__(self, "dimension", n)
        object.__setattr__(self, "delay", float(self.delay))
        object.__setattr__(self, "horizon", float(self.horizon))
        blocks = tuple((_as_nodes(t, v, n)) for t, v in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        rl = np.asarray(self.right_limits, dtype=float).reshape(-1, n)
        object.__setattr__(self, "right_limits", np.ascontiguousarray(rl))

        if len(blocks) < 1:
            raise ValueError("a trajectory needs at least the history block")
        ht, _ = blocks[0]
        if ht[0] != -self.delay or ht[-1] != 0.0:
            raise ValueError("history block must span exactly [-delay, 0]")
        m = len(tk)
        if np.any(tk <= 0.0) or np.any(tk >= self.horizon) or np.any(np.diff(tk) <= 0.0):
            raise ValueError("impulse times must be strictly increasing inside (0, horizon)")
        nmain = len(blocks) - 1
        if nmain > m + 1:
            raise ValueError("more main blocks than the impulse schedule allows")
        njump = rl.shape[0]
        if njump not in (max(nmain - 1, 0), min(nmain, m)):
            raise ValueError("right_limits length inconsistent with block count")
        for j in range(1, len(blocks)):
            bt, bv = blocks[j]
            start = 0.0 if j == 1 else tk[j - 2]
            if bt[0] != start:
                raise ValueError(f"block {j} must start at {start}, got {bt[0]}")
            end = self.horizon if j == m + 1 else tk[j - 1]
            if bt[-1] != end:
                raise ValueError(f"block {j} must end at {end}, got {bt[-1]}")
            if j == 1:
                # no impulse at 0: the shared node must agree bit-exactly
                if not np.array_equal(blocks[0][1][-1], bv[0]):
                    raise ValueError("history and first block disagree at t = 0")
            else:
                if not np.array_equal(rl[j - 2], bv[0]):
                    raise ValueError(f"block {j} first node must carry right_limits[{j - 2}]")

    # -- derived flat arrays used by evaluation -------------------------------

    @cached_property
    def main_times(self) -> np.ndarray:
        if len(self.blocks) == 1:
            return np.empty(0)
        return np.concatenate([t for t, _ in self.blocks[1:]])

    @cached_property
    def main_values(self) -> np.ndarray:
        if len(self.blocks) == 1:
            return np.empty((0, self.dimension))
        return np.concatenate([v for _, v in self.blocks[1:]], axis=0)

    @property
    def coverage_end(self) -> float:
        return float(self.blocks[-1][0][-1])

    @property
    def complete(self) -> bool:
        return len(self.blocks) == len(self.impulse_times) + 2

    def jump_at(self, k: int) -> np.ndarray:
        """Recorded jump w(t_k^+) - w(t_k^-) for the 1-based impulse index k."""
        if not 1 <= k <= len(self.right_limits):
            raise IndexError(f"impulse index {k} out of range")
        return self.right_limits[k - 1] - self.eval(float(self.impulse_times[k - 1]))

    # -- evaluation ------------------------------------------------------------

    def _check_domain(self, t: float, upper: float):
        pad = _EDGE_TOL * (1.0 + self.horizon + self.delay)
        if t < -self.delay - pad or t > upper + pad:
            raise ValueError(f"t={t} outside [{-self.delay}, {upper}]")

    def eval(self, t: float) -> np.ndarray:
        """Left-continuous value: at an impulse time this is w(t_k^-)."""
        t = float(t)
        self._check_domain(t, self.coverage_end)
        if t <= 0.0:
            ht, hv = self.blocks[0]
            return _interp_sorted(ht, hv, np.array([t]))[0]
        return _interp_sorted(self.main_times, self.main_values, np.array([t]))[0]

    def eval_right(self, t: float) -> np.ndarray:
        """Right limit w(t^+); differs from eval only at impulse times.

        Defined on [-r, horizon): there is no right limit at the horizon.
        """
        t = float(t)
        if t >= self.horizon:
            raise ValueError(f"right limit undefined at t={t} >= horizon {self.horizon}")
        self._check_domain(t, self.coverage_end)
        if t < 0.0:
            ht, hv = self.blocks[0]
            return _interp_sorted(ht, hv, np.array([t]))[0]
        mt, mv = self.main_times, self.main_values
        if len(mt) == 0:
            return self.blocks[0][1][-1].copy()
        i = np.searchsorted(mt, t, side="right") - 1
        if i < 0:
            return mv[0].copy()
        if mt[i] == t:
            if i + 1 == len(mt) and len(self.right_limits) == len(self.blocks) - 1:
                # coverage ends at an impulse whose jump is already recorded
                return self.right_limits[-1].copy()
            return mv[i].copy()
        if i + 1 >= len(mt):
            return mv[-1].copy()
        frac = (t - mt[i]) / (mt[i + 1] - mt[i])
        return mv[i] + frac * (mv[i + 1] - mv[i])

    def eval_many(self, ts) -> np.ndarray:
        """Vectorized left-continuous evaluation."""
        ts = np.asarray(ts, dtype=float)
        out = np.empty(ts.shape + (self.dimension,))
        hist = ts <= 0.0
        if np.any(hist):
            ht, hv = self.blocks[0]
            out[hist] = _interp_sorted(ht, hv, ts[hist])
        if np.any(~hist):
            out[~hist] = _interp_sorted(self.main_times, self.main_values, ts[~hist])
        return out

    def history_segment(self, t: float) -> HistorySegment:
        """The element w_t of C([-r, 0]) sampled on the native nodes in [t-r, t]."""
        t = float(t)
        if t < -_EDGE_TOL or t > self.coverage_end + _EDGE_TOL * (1.0 + self.horizon):
            raise ValueError(f"t={t} outside [0, {self.coverage_end}]")
        r = self.delay
        lo = t - r
        ht = self.blocks[0][0]
        mt = self.main_times
        parts = [ht[(ht > lo) & (ht < t)], mt[(mt > lo) & (mt < t)]]
        inner = np.concatenate(parts)
        if len(inner):
            keep = np.empty(len(inner), dtype=bool)
            keep[0] = True
            keep[1:] = np.diff(inner) > 0.0
            inner = inner[keep]
        inner_thetas = inner - t
        # a node one ulp inside the window can round onto an endpoint
        mask = (inner_thetas > -r) & (inner_thetas < 0.0)
        inner = inner[mask]
        thetas = np.concatenate(([-r], inner_thetas[mask], [0.0]))
        values = np.concatenate(
            (self.eval_many([lo]), self.eval_many(inner), self.eval_many([t])), axis=0
        )
        return HistorySegment(thetas, values)

    def sigma_norm(self) -> float:
        """Max over the blocks on [0, b] of the sup of node values (inf norm)."""
        if len(self.main_values) == 0:
            return 0.0
        return float(np.max(np.abs(self.main_values)))


def sigma_diff(a: PiecewiseTrajectory, b: PiecewiseTrajectory) -> float:
    """Sigma norm of a - b on the union of the two node grids.

    Right limits at each impulse time are compared as well, so a jump
    mismatch is picked up even when the left values agree.
    """
    if a.dimension != b.dimension:
        raise ValueError("trajectories have different dimensions")
    if a.horizon != b.horizon or not np.array_equal(a.impulse_times, b.impulse_times):
        raise ValueError("trajectories have different impulse structure")
    grid = np.unique(np.concatenate([a.main_times, b.main_times]))
    if len(grid) == 0:
        return 0.0
    gap = float(np.max(np.abs(a.eval_many(grid) - b.eval_many(grid))))
    for tk in a.impulse_times:
        tk = float(tk)
        if tk <= min(a.coverage_end, b.coverage_end):
            gap = max(gap, float(np.max(np.abs(a.eval_right(tk) - b.eval_right(tk)))))
    return gap
