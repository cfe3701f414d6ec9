"""Mild-solution solver: segment-wise Picard iteration with trapezoid quadrature.

Each inter-impulse segment [t_k, t_{k+1}] is solved as a fixed point of

    w(t) = T(t - t_k) w(t_k^+) + int_{t_k}^t T(t - s) V(s, w_s, z(s)) ds,
    z(s) = int_0^s U(s, sigma, w_sigma) dsigma,

restarting from the jumped value after each impulse. The Duhamel integral uses
the matrix-group identity T(t - s) = T(t - t_k) T(t_k - s), which turns the
per-node quadrature into one cumulative sum; the double Volterra integral is
accumulated column by column so no N x N matrix is ever materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ImpulsiveProblem, as_state, validate
from .semigroup import apply_stack, propagator_stack
from .trajectory import HistorySegment, PiecewiseTrajectory

__all__ = [
    "Discretization",
    "PicardControl",
    "SolveReport",
    "ConvergenceError",
    "volterra_term",
    "window_integral",
    "jump_value",
    "solve_segment",
    "solve_mild",
    "mild_residual",
]


@dataclass(frozen=True)
class Discretization:
    step: float = 1e-3
    quadrature: str = "trapezoid"

    def __post_init__(self):
        if not self.step > 0.0:
            raise ValueError("step must be > 0")
        if self.quadrature != "trapezoid":
            raise ValueError(f"unknown quadrature rule {self.quadrature!r}")


@dataclass(frozen=True)
class PicardControl:
    tolerance: float = 1e-10
    max_iterations: int = 200
    initial_iterate: str = "constant"

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.initial_iterate not in ("constant", "ramp"):
            raise ValueError("initial_iterate must be 'constant' or 'ramp'")


@dataclass(frozen=True)
class SolveReport:
    iterations_per_segment: tuple
    final_residual: float
    jumps: tuple


class ConvergenceError(RuntimeError):
    """Picard iteration failed to contract within the allotted iterations."""

    def __init__(self, segment_index: int, iterations: int, last_gap: float):
        self.segment_index = segment_index
        self.iterations = iterations
        self.last_gap = last_gap
        super().__init__(
            f"segment {segment_index}: no convergence after {iterations} iterations "
            f"(last successive gap {last_gap:.3e})"
        )


# ---------------------------------------------------------------------------
# kernel adapters

class _KernelU:
    """Evaluates U over a vector of outer times.

    The first call probes whether U broadcasts over its time argument (and
    cross-checks two rows against scalar calls); if not, every later call
    falls back to a scalar loop.
    """

    def __init__(self, problem: ImpulsiveProblem):
        self._U = problem.U
        self._n = problem.dimension
        self._mode = None

    def _loop(self, ts, s, seg):
        return np.stack([as_state(self._U(float(t), s, seg), self._n) for t in ts])

    def _normalize(self, raw, T):
        arr = np.asarray(raw, dtype=float)
        n = self._n
        if arr.ndim == 0:
            return np.full((T, n), float(arr))
        if arr.shape == (T, n):
            return arr
        if n == 1:
            if arr.shape == (T,):
                return arr[:, None]
            if arr.shape in ((1,), (1, 1)):
                return np.full((T, 1), float(arr.reshape(())))
        if arr.shape == (n,):
            return np.broadcast_to(arr, (T, n)).copy()
        raise ValueError(f"cannot interpret batched kernel output of shape {arr.shape}")

    def __call__(self, ts, s, seg) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        T = len(ts)
        s = float(s)
        if self._mode == "scalar":
            return self._loop(ts, s, seg)
        try:
            arr = self._normalize(self._U(ts, s, seg), T)
        except Exception:
            if self._mode is None:
                self._mode = "scalar"
                return self._loop(ts, s, seg)
            raise
        if self._mode is None:
            first = as_state(self._U(float(ts[0]), s, seg), self._n)
            last = as_state(self._U(float(ts[-1]), s, seg), self._n)
            tol = 1e-10 * (1.0 + max(np.max(np.abs(first)), np.max(np.abs(last))))
            if np.max(np.abs(arr[0] - first)) > tol or np.max(np.abs(arr[-1] - last)) > tol:
                self._mode = "scalar"
                return self._loop(ts, s, seg)
            self._mode = "batch"
        return arr


# ---------------------------------------------------------------------------
# combined state view (history + main nodes, impulse times duplicated)

class _StateView:
    """Left-continuous evaluation over history plus main node arrays.

    main_times may contain each impulse time twice: first occurrence carries
    the pre-jump value, second the post-jump value. Exact queries resolve to
    the first occurrence (left limit); interior queries interpolate from the
    nearest enclosing pair, which lands on the post-jump branch just past a
    jump.
    """

    def __init__(self, dimension, delay, hist_times, hist_values, main_times, main_values):
        self.n = dimension
        self.delay = delay
        self.ht = hist_times
        self.hv = hist_values
        self.mt = main_times
        self.mv = main_values

    def eval_left(self, t: float) -> np.ndarray:
        if t <= 0.0:
            return self._interp(self.ht, self.hv, t, side="left")
        return self._interp(self.mt, self.mv, t, side="left")

    def eval_right(self, t: float) -> np.ndarray:
        if t < 0.0:
            return self._interp(self.ht, self.hv, t, side="left")
        if len(self.mt) == 0:
            return self.hv[-1]
        return self._interp(self.mt, self.mv, t, side="right")

    @staticmethod
    def _interp(grid, vals, t, side):
        if side == "left":
            i = np.searchsorted(grid, t, side="left")
            if i < len(grid) and grid[i] == t:
                return vals[i]
            i -= 1
        else:
            i = np.searchsorted(grid, t, side="right") - 1
            if i >= 0 and grid[i] == t:
                return vals[i]
        if i < 0:
            return vals[0]
        if i + 1 >= len(grid):
            return vals[-1]
        frac = (t - grid[i]) / (grid[i + 1] - grid[i])
        return vals[i] + frac * (vals[i + 1] - vals[i])

    def segment_at(self, t: float, end_value=None) -> HistorySegment:
        """w_t sampled on the native nodes of [t - r, t].

        end_value overrides the sample at theta = 0 (used for one-sided reads
        at impulse times).
        """
        r = self.delay
        lo = t - r
        ih0 = np.searchsorted(self.ht, lo, side="right")
        ih1 = np.searchsorted(self.ht, t, side="left")
        im0 = np.searchsorted(self.mt, lo, side="right")
        im1 = np.searchsorted(self.mt, t, side="left")
        times = np.concatenate([self.ht[ih0:ih1], self.mt[im0:im1]])
        values = np.concatenate([self.hv[ih0:ih1], self.mv[im0:im1]])
        if len(times) > 1:
            keep = np.empty(len(times), dtype=bool)
            keep[0] = True
            np.greater(times[1:], times[:-1], out=keep[1:])
            if not keep.all():
                times = times[keep]
                values = values[keep]
        lo_val = self.eval_left(lo) if lo > -r else self.hv[0]
        hi_val = self.eval_left(t) if end_value is None else np.asarray(end_value, dtype=float)
        inner = times - t
        # a node one ulp inside the window can round onto an endpoint
        mask = (inner > -r) & (inner < 0.0)
        thetas = np.concatenate([[-r], inner[mask], [0.0]])
        vals = np.concatenate([lo_val[None, :], values[mask], hi_val[None, :]])
        return HistorySegment(thetas, vals)


def _view_from_trajectory(traj: PiecewiseTrajectory) -> _StateView:
    ht, hv = traj.blocks[0]
    return _StateView(traj.dimension, traj.delay, ht, hv, traj.main_times, traj.main_values)


# ---------------------------------------------------------------------------
# quadrature building blocks

def _cumtrap(times: np.ndarray, g: np.ndarray) -> np.ndarray:
    incr = 0.5 * np.diff(times)[:, None] * (g[1:] + g[:-1])
    out = np.empty_like(g)
    out[0] = 0.0
    np.cumsum(incr, axis=0, out=out[1:])
    return out


def _volterra_rect(kernel, t_nodes, sigma_times, sigma_segs, n):
    """int over the whole sigma range of U(t, sigma, w_sigma), for every t."""
    out = np.zeros((len(t_nodes), n))
    if len(sigma_times) < 2:
        return out
    d = np.diff(sigma_times)
    w = np.zeros(len(sigma_times))
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    for i, wi in enumerate(w):
        if wi == 0.0:
            continue
        out += wi * kernel(t_nodes, sigma_times[i], sigma_segs[i])
    return out


def _volterra_tri(kernel, nodes, segs, n):
    """z[j] = int_{nodes[0]}^{nodes[j]} U(nodes[j], sigma, w_sigma) dsigma."""
    T = len(nodes)
    z = np.zeros((T, n))
    if T < 2:
        return z
    d = np.diff(nodes)
    for i in range(T):
        left = d[i - 1] if i > 0 else 0.0
        right = d[i] if i < T - 1 else 0.0
        if left == 0.0 and right == 0.0:
            continue
        col = kernel(nodes[i:], nodes[i], segs[i])
        if left != 0.0:
            z[i:] += 0.5 * left * col
        if right != 0.0:
            z[i + 1 :] += 0.5 * right * col[1:]
    return z


def _segment_grid(a: float, b: float, h: float, specials=()) -> np.ndarray:
    """Nodes of [a, b] with spacing <= h; the special points are exact nodes."""
    cuts = [a]
    for s in sorted(set(float(x) for x in specials)):
        if a < s < b and s - cuts[-1] > 1e-14 * (1.0 + abs(b)):
            cuts.append(s)
    cuts.append(b)
    parts = [np.array([a])]
    for p, q in zip(cuts[:-1], cuts[1:]):
        pieces = max(1, math.ceil((q - p) / h - 1e-9))
        parts.append(np.linspace(p, q, pieces + 1)[1:])
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# public quadrature operations

def _integrate_G(problem: ImpulsiveProblem, view: _StateView, k: int) -> np.ndarray:
    lo, hi = problem.jump_window(k)
    n = problem.dimension
    if hi == lo:
        return np.zeros(n)
    i0 = np.searchsorted(view.mt, lo, side="right")
    i1 = np.searchsorted(view.mt, hi, side="left")
    times = np.concatenate([[lo], view.mt[i0:i1], [hi]])
    imp = problem.impulse_times
    vals = np.empty((len(times), n))
    for i, s in enumerate(times):
        # at an exact impulse time the integrand's one-sided value is the right limit
        on_jump = bool(np.any(imp == s)) and s < hi
        end = view.eval_right(s) if on_jump else None
        seg = view.segment_at(float(s), end_value=end)
        vals[i] = as_state(problem.G(float(s), seg), n)
    return np.trapezoid(vals, times, axis=0)


def window_integral(problem: ImpulsiveProblem, traj: PiecewiseTrajectory, k: int) -> np.ndarray:
    """int of G(s, w_s) over [t_k - tau_k, t_k - theta_k]; exactly zero when the
    window has zero length."""
    lo, hi = problem.jump_window(k)
    if traj.coverage_end < hi - 1e-12:
        raise ValueError(f"trajectory covers only up to {traj.coverage_end}, window needs {hi}")
    return _integrate_G(problem, _view_from_trajectory(traj), k)


def jump_value(problem: ImpulsiveProblem, traj: PiecewiseTrajectory, k: int) -> np.ndarray:
    """I_k applied to the window integral: the state jump added at t_k."""
    return as_state(problem.jump_maps[k - 1](window_integral(problem, traj, k)), problem.dimension)


def volterra_term(problem: ImpulsiveProblem, traj: PiecewiseTrajectory, t: float) -> np.ndarray:
    """int_0^t U(t, s, w_s) ds by composite trapezoid on the native nodes."""
    t = float(t)
    if t < 0.0 or t > traj.coverage_end + 1e-12:
        raise ValueError(f"t={t} outside the trajectory's coverage [0, {traj.coverage_end}]")
    n = problem.dimension
    if t == 0.0:
        return np.zeros(n)
    view = _view_from_trajectory(traj)
    i1 = np.searchsorted(view.mt, t, side="left")
    times = np.concatenate([view.mt[:i1], [t]])
    values = np.concatenate([view.mv[:i1], [view.eval_left(t)]])
    segs = [view.segment_at(float(s), end_value=values[i]) for i, s in enumerate(times)]
    kernel = _KernelU(problem)
    return _volterra_rect(kernel, np.array([t]), times, segs, n)[0]


# ---------------------------------------------------------------------------
# Picard iteration

def solve_segment(problem, prefix: PiecewiseTrajectory, k: int, disc: Discretization,
                  control: PicardControl):
    """Fixed point of the mild map on [t_k, t_{k+1}] given the solved prefix.

    Returns (node times, node values, iteration count). The iterate history
    reads use the previous sweep (full-step Picard); iteration stops once the
    successive sup-norm gap falls below the tolerance (it is driven further,
    toward the roundoff floor, so the limit does not depend on the initial
    iterate).
    """
    n = problem.dimension
    m = problem.num_impulses
    if not 0 <= k <= m:
        raise IndexError(f"segment index {k} out of range 0..{m}")
    t_start = 0.0 if k == 0 else float(problem.impulse_times[k - 1])
    t_end = problem.horizon if k == m else float(problem.impulse_times[k])
    if abs(prefix.coverage_end - t_start) > 1e-12 * (1.0 + problem.horizon):
        raise ValueError(f"prefix covers up to {prefix.coverage_end}, segment starts at {t_start}")

    if k == 0:
        w_plus = prefix.blocks[0][1][-1]
    else:
        if len(prefix.right_limits) < k:
            raise ValueError(f"prefix lacks the right limit at t_{k}")
        w_plus = prefix.right_limits[k - 1]

    specials = problem.jump_window(k + 1) if k + 1 <= m else ()
    times = _segment_grid(t_start, t_end, disc.step, specials)
    T = len(times)
    taus = times - t_start

    A = problem.generator
    fwd = propagator_stack(A, taus)
    bwd = propagator_stack(A, -taus)

    ht, hv = prefix.blocks[0]
    pre_t, pre_v = prefix.main_times, prefix.main_values
    kernel = _KernelU(problem)

    def make_view(seg_vals):
        return _StateView(n, problem.delay,
                          ht, hv,
                          np.concatenate([pre_t, times]),
                          np.concatenate([pre_v, seg_vals], axis=0))

    def make_segs(view, seg_vals):
        # the stored node value is the correct one-sided sample at theta = 0
        # (post-jump at a segment start, interior values elsewhere)
        return [view.segment_at(float(s), end_value=seg_vals[i]) for i, s in enumerate(times)]

    # the prefix part of the inner integral is iterate-independent
    if len(pre_t):
        pre_view = _StateView(n, problem.delay, ht, hv, pre_t, pre_v)
        pre_segs = [pre_view.segment_at(float(s), end_value=pre_v[i]) for i, s in enumerate(pre_t)]
        z_rect = _volterra_rect(kernel, times, pre_t, pre_segs, n)
    else:
        z_rect = np.zeros((T, n))

    if control.initial_iterate == "constant":
        values = np.broadcast_to(w_plus, (T, n)).copy()
    else:
        values = w_plus[None, :] + taus[:, None]

    tol = control.tolerance
    best_gap = np.inf
    stall = 0
    gap = np.inf
    iterations = 0
    for iterations in range(1, control.max_iterations + 1):
        view = make_view(values)
        segs = make_segs(view, values)
        z = z_rect + _volterra_tri(kernel, times, segs, n)
        v = np.empty((T, n))
        for i in range(T):
            v[i] = as_state(problem.V(float(times[i]), segs[i], z[i]), n)
        new = apply_stack(fwd, w_plus[None, :] + _cumtrap(times, apply_stack(bwd, v)))
        gap = float(np.max(np.abs(new - values)))
        values = new
        floor = 1e-13 * (1.0 + float(np.max(np.abs(values))))
        if gap <= max(1e-3 * tol, floor):
            break
        if gap <= tol:
            stall = stall + 1 if gap > 0.7 * best_gap else 0
            if stall >= 2:
                break  # roundoff floor reached below the tolerance
        best_gap = min(best_gap, gap)
    else:
        if gap > tol:
            raise ConvergenceError(k, control.max_iterations, gap)
    return times, values, iterations


def solve_mild(problem: ImpulsiveProblem,
               disc: Discretization = Discretization(),
               control: PicardControl = PicardControl()):
    """Solve the full impulsive problem on [-r, b].

    History is sampled at the discretization step, then each segment is solved
    in turn; the integral jump is applied at every impulse and the assembled
    trajectory is checked against the defining identity (final_residual).
    """
    violations = validate(problem)
    if violations:
        raise ValueError("invalid problem: " + "; ".join(violations))
    n = problem.dimension
    r, b = problem.delay, problem.horizon
    nh = max(1, math.ceil(r / disc.step - 1e-9))
    hist_t = np.linspace(-r, 0.0, nh + 1)
    hist_v = problem.history_values(hist_t)

    blocks = [(hist_t, hist_v)]
    right_limits = np.zeros((0, n))
    jumps = []
    iterations = []
    m = problem.num_impulses
    for k in range(m + 1):
        prefix = PiecewiseTrajectory(n, r, b, problem.impulse_times, tuple(blocks), right_limits)
        times, values, iters = solve_segment(problem, prefix, k, disc, control)
        blocks.append((times, values))
        iterations.append(iters)
        if k < m:
            current = PiecewiseTrajectory(n, r, b, problem.impulse_times, tuple(blocks), right_limits)
            w_left = values[-1]
            w_right = w_left + jump_value(problem, current, k + 1)
            jumps.append(w_right - w_left)  # recorded as the stored difference
            right_limits = np.vstack([right_limits, w_right[None, :]])

    traj = PiecewiseTrajectory(n, r, b, problem.impulse_times, tuple(blocks), right_limits)
    residual = mild_residual(problem, traj, disc)
    report = SolveReport(tuple(iterations), residual, tuple(jumps))
    return traj, report


# ---------------------------------------------------------------------------
# defect of the defining identity

def _refine_block(bt: np.ndarray, bv: np.ndarray):
    """Insert interval midpoints; values at midpoints follow the stored linear
    interpolation, so the refinement adds quadrature nodes without changing w."""
    T = len(bt)
    rt = np.empty(2 * T - 1)
    rv = np.empty((2 * T - 1, bv.shape[1]))
    rt[0::2] = bt
    rt[1::2] = 0.5 * (bt[:-1] + bt[1:])
    rv[0::2] = bv
    rv[1::2] = 0.5 * (bv[:-1] + bv[1:])
    native = np.zeros(2 * T - 1, dtype=bool)
    native[0::2] = True
    return rt, rv, native


def mild_residual(problem: ImpulsiveProblem, traj: PiecewiseTrajectory,
                  disc: Discretization = Discretization()) -> float:
    """Sup defect of w(t) against the mild formula at the native nodes.

    All integrals are recomputed on a grid twice as fine as the trajectory's
    own nodes; right limits at impulse times are checked via eval_right.
    """
    n = problem.dimension
    if not traj.complete:
        raise ValueError("mild_residual needs a trajectory covering [0, horizon]")
    rts, rvs, natives = [], [], []
    for bt, bv in traj.blocks[1:]:
        # each block's first node already carries its one-sided (post-jump) value
        rt, rv, nat = _refine_block(bt, bv)
        rts.append(rt)
        rvs.append(rv)
        natives.append(nat)
    sigma = np.concatenate(rts)
    w_ref = np.concatenate(rvs, axis=0)
    native = np.concatenate(natives)

    ht, hv = traj.blocks[0]
    view = _StateView(n, problem.delay, ht, hv, sigma, w_ref)
    segs = [view.segment_at(float(s), end_value=w_ref[i]) for i, s in enumerate(sigma)]
    kernel = _KernelU(problem)
    z = _volterra_tri(kernel, sigma, segs, n)
    v = np.empty((len(sigma), n))
    for i in range(len(sigma)):
        v[i] = as_state(problem.V(float(sigma[i]), segs[i], z[i]), n)

    A = problem.generator
    fwd = propagator_stack(A, sigma)
    bwd = propagator_stack(A, -sigma)
    varsigma0 = hv[-1]
    rhs = apply_stack(fwd, varsigma0[None, :] + _cumtrap(sigma, apply_stack(bwd, v)))

    dup2 = np.zeros(len(sigma), dtype=bool)
    dup2[1:] = sigma[1:] == sigma[:-1]
    for k in range(1, problem.num_impulses + 1):
        tk = float(problem.impulse_times[k - 1])
        wI = as_state(problem.jump_maps[k - 1](_integrate_G(problem, view, k)), n)
        rows = (sigma > tk) | ((sigma == tk) & dup2)
        idx = np.nonzero(rows)[0]
        if len(idx):
            stack = propagator_stack(A, sigma[idx] - tk)
            rhs[idx] += apply_stack(stack, np.broadcast_to(wI, (len(idx), n)))

    defect = np.max(np.abs(w_ref - rhs), axis=1)
    return float(np.max(defect[native]))
