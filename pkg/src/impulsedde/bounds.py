"""Impulse-aware integral inequality, existence certificate, and growth bounds.

The central object is the inequality instance

    u(t) <= n(t) + int_0^t f u + int_0^t f(s) (int_0^s g u) ds
            + sum_{0 < t_k < t} beta_k int_{t_k - tau_k}^{t_k - theta_k} u(s) ds,

whose closed-form consequence is u(t) <= n(t) * prod C_k * exp(int_{t_alpha}^t
f [1 + int_0^s g]), with per-impulse constants C_k. The a-priori solution bound
and the three data-dependence bounds all reduce to this machinery with
f = M N_V, g = N_U and beta_k = M L_G D_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .model import ImpulsiveProblem, LipschitzData, as_state
from .semigroup import SemigroupBound
from .solver import Discretization, PicardControl, _KernelU, _volterra_tri, solve_mild
from .trajectory import HistorySegment, sigma_diff

__all__ = [
    "PachpatteInstance",
    "BoundReport",
    "CertificateReport",
    "DependenceReport",
    "DivergenceError",
    "compute_Ck",
    "pachpatte_bound",
    "maximal_solution",
    "build_oracle_grid",
    "existence_certificate",
    "apriori_bound",
    "dependence_initial_bound",
    "dependence_parameter_bound",
    "dependence_function_bound",
    "check_dependence",
    "random_instance",
]


class DivergenceError(RuntimeError):
    """The maximal-solution sweep overflowed or exhausted its sweep budget."""


def _cumtrap1d(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.empty_like(y)
    out[0] = 0.0
    np.cumsum(0.5 * np.diff(x) * (y[1:] + y[:-1]), out=out[1:])
    return out


def _sample(fn: Callable, xs: np.ndarray) -> np.ndarray:
    return np.array([float(fn(float(x))) for x in xs])


@dataclass(frozen=True)
class PachpatteInstance:
    """Data of the impulsive inequality; hosts its quadrature tables.

    n must be positive and nondecreasing, f and g nonnegative (checked on the
    instance grid at construction), and each window [t_k - tau_k, t_k - theta_k]
    must sit inside the preceding inter-impulse interval.
    """

    n: Callable
    f: Callable
    g: Callable
    impulse_times: np.ndarray
    beta: np.ndarray
    theta: np.ndarray
    tau: np.ndarray
    horizon: float
    grid_points: int = 2048

    def __post_init__(self):
        for name in ("impulse_times", "beta", "theta", "tau"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "grid_points", int(self.grid_points))
        if not self.horizon > 0.0:
            raise ValueError("horizon must be > 0")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")
        m = len(self.impulse_times)
        if not (len(self.beta) == len(self.theta) == len(self.tau) == m):
            raise ValueError("beta, theta, tau must match the impulse count")
        if np.any(self.beta < 0.0):
            raise ValueError("beta_k must be >= 0")
        tk = self.impulse_times
        if m and (np.any(tk <= 0.0) or np.any(tk > self.horizon) or np.any(np.diff(tk) <= 0.0)):
            raise ValueError("impulse times must be strictly increasing inside (0, horizon]")
        prev = 0.0
        for k in range(m):
            if not (0.0 <= self.theta[k] <= self.tau[k] <= tk[k] - prev + 1e-12):
                raise ValueError(
                    f"window offsets violate 0 <= theta_k <= tau_k <= t_k - t_(k-1) at k={k + 1}"
                )
            prev = tk[k]
        # sampled sign and monotonicity checks
        xs = self.grid
        nv = _sample(self.n, xs)
        if np.any(nv <= 0.0) or np.any(np.diff(nv) < -1e-12 * (1.0 + np.max(np.abs(nv)))):
            raise ValueError("n(t) must be positive and nondecreasing on the grid")
        if np.any(_sample(self.f, xs) < 0.0) or np.any(_sample(self.g, xs) < 0.0):
            raise ValueError("f and g must be nonnegative on the grid")

    @property
    def num_impulses(self) -> int:
        return len(self.impulse_times)

    def window(self, k: int) -> tuple:
        tk = float(self.impulse_times[k - 1])
        return tk - float(self.tau[k - 1]), tk - float(self.theta[k - 1])

    @cached_property
    def grid(self) -> np.ndarray:
        """Master quadrature grid: uniform nodes joined with every breakpoint."""
        pts = [np.linspace(0.0, self.horizon, self.grid_points)]
        for k in range(1, self.num_impulses + 1):
            lo, hi = self.window(k)
            pts.append(np.array([lo, hi, float(self.impulse_times[k - 1])]))
        return np.unique(np.concatenate(pts))

    @cached_property
    def _tables(self):
        xs = self.grid
        fv = _sample(self.f, xs)
        gv = _sample(self.g, xs)
        G = _cumtrap1d(xs, gv)
        phi = fv * (1.0 + G)
        F = _cumtrap1d(xs, phi)
        return fv, gv, G, phi, F

    def _G_at(self, t: float) -> float:
        xs = self.grid
        _, gv, G, _, _ = self._tables
        i = int(np.searchsorted(xs, t, side="right")) - 1
        i = min(max(i, 0), len(xs) - 1)
        if xs[i] == t or i == len(xs) - 1:
            return float(G[i])
        return float(G[i] + 0.5 * (t - xs[i]) * (gv[i] + float(self.g(t))))

    def _F_at(self, t: float) -> float:
        xs = self.grid
        fv, _, _, phi, F = self._tables
        i = int(np.searchsorted(xs, t, side="right")) - 1
        i = min(max(i, 0), len(xs) - 1)
        if xs[i] == t or i == len(xs) - 1:
            return float(F[i])
        phi_t = float(self.f(t)) * (1.0 + self._G_at(t))
        return float(F[i] + 0.5 * (t - xs[i]) * (phi[i] + phi_t))

    @cached_property
    def Ck_values(self) -> tuple:
        return tuple(compute_Ck(self, k) for k in range(1, self.num_impulses + 1))


@dataclass(frozen=True)
class BoundReport:
    Ck: tuple
    alpha_index: int
    value: float


@dataclass(frozen=True)
class CertificateReport:
    lhs: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class DependenceReport:
    kind: str
    empirical: float
    theoretical: float
    residual_budget: float
    dominated: bool


def compute_Ck(inst: PachpatteInstance, k: int) -> float:
    """Per-impulse amplification constant

    C_k = exp(int_{t_{k-1}}^{t_k} f[1 + int_0^s g])
          + beta_k int_{t_k-tau_k}^{t_k-theta_k} exp(int_{t_{k-1}}^s f[1 + int g]) ds.
    """
    if not 1 <= k <= inst.num_impulses:
        raise IndexError(f"impulse index {k} out of range 1..{inst.num_impulses}")
    t_prev = 0.0 if k == 1 else float(inst.impulse_times[k - 2])
    t_k = float(inst.impulse_times[k - 1])
    F_prev = inst._F_at(t_prev)
    term1 = math.exp(inst._F_at(t_k) - F_prev)
    lo, hi = inst.window(k)
    if hi <= lo:
        return term1
    xs = inst.grid
    i0 = int(np.searchsorted(xs, lo, side="right"))
    i1 = int(np.searchsorted(xs, hi, side="left"))
    times = np.concatenate([[lo], xs[i0:i1], [hi]])
    vals = np.array([math.exp(inst._F_at(float(s)) - F_prev) for s in times])
    return term1 + float(inst.beta[k - 1]) * float(np.trapezoid(vals, times))


def pachpatte_bound(inst: PachpatteInstance, t: float) -> BoundReport:
    """Closed-form bound n(t) * prod_{t_k < t} C_k * exp(int_{t_alpha}^t f[1+int g]).

    alpha resolves to the last impulse at or before t; with no impulse before t
    the exponential integrates from 0.
    """
    t = float(t)
    if not 0.0 <= t <= inst.horizon + 1e-12:
        raise ValueError(f"t={t} outside [0, {inst.horizon}]")
    tk = inst.impulse_times
    # strictly-before count: u is left-continuous at t_k, so at t = t_k the
    # resolved alpha must match the product's strict index set
    alpha = int(np.searchsorted(tk, t, side="left"))
    t_alpha = float(tk[alpha - 1]) if alpha >= 1 else 0.0
    prod = float(np.prod(inst.Ck_values[:alpha])) if alpha else 1.0
    value = float(inst.n(t)) * prod * math.exp(inst._F_at(t) - inst._F_at(t_alpha))
    return BoundReport(Ck=inst.Ck_values, alpha_index=alpha, value=value)


def build_oracle_grid(inst: PachpatteInstance, step: float) -> np.ndarray:
    """Grid for the maximal-solution sweep: spacing <= step, all breakpoints exact."""
    cuts = {0.0, inst.horizon}
    for k in range(1, inst.num_impulses + 1):
        lo, hi = inst.window(k)
        cuts.update((lo, hi, float(inst.impulse_times[k - 1])))
    cuts = sorted(c for c in cuts if 0.0 <= c <= inst.horizon)
    parts = [np.array([0.0])]
    for p, q in zip(cuts[:-1], cuts[1:]):
        if q - p <= 0.0:
            continue
        pieces = max(1, math.ceil((q - p) / step - 1e-9))
        parts.append(np.linspace(p, q, pieces + 1)[1:])
    return np.concatenate(parts)


def maximal_solution(inst: PachpatteInstance, grid: np.ndarray,
                     sweep_tol: float = 1e-12, max_sweeps: int = 10 ** 6) -> np.ndarray:
    """Discrete fixed point of the inequality taken with equality.

    Full sweeps u <- n + F(u) starting from u = n increase monotonically to the
    least fixed point, which dominates every u satisfying the inequality on the
    same grid. Divergence (overflow or sweep-budget exhaustion) raises.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing with >= 2 nodes")
    if abs(grid[0]) > 1e-12 or abs(grid[-1] - inst.horizon) > 1e-9:
        raise ValueError("grid must cover [0, horizon]")

    def locate(x: float) -> int:
        i = int(np.searchsorted(grid, x, side="left"))
        if i >= len(grid) or abs(grid[i] - x) > 1e-9:
            raise ValueError(f"grid must contain the breakpoint {x}")
        return i

    windows = []
    for k in range(1, inst.num_impulses + 1):
        lo, hi = inst.window(k)
        tk = float(inst.impulse_times[k - 1])
        locate(tk)
        if hi > lo:
            sl = slice(locate(lo), locate(hi) + 1)
            windows.append((k, sl, grid > tk))
    fv = _sample(inst.f, grid)
    gv = _sample(inst.g, grid)
    nv = _sample(inst.n, grid)

    u = nv.copy()
    for _ in range(max_sweeps):
        unew = nv + _cumtrap1d(grid, fv * u) + _cumtrap1d(grid, fv * _cumtrap1d(grid, gv * u))
        for k, sl, active in windows:
            unew[active] += float(inst.beta[k - 1]) * float(np.trapezoid(u[sl], grid[sl]))
        if not np.all(np.isfinite(unew)):
            raise DivergenceError("maximal-solution sweep overflowed")
        gap = float(np.max(np.abs(unew - u)))
        u = unew
        if gap <= sweep_tol * (1.0 + float(np.max(u))):
            return u
    raise DivergenceError(f"no convergence within {max_sweeps} sweeps")


# ---------------------------------------------------------------------------
# existence certificate and growth bounds

def existence_certificate(problem: ImpulsiveProblem, lip: LipschitzData,
                          sg: SemigroupBound) -> CertificateReport:
    """Contraction check sum_k 2 b M L_G D_k < 1 guaranteeing a mild solution."""
    if len(lip.D_k) != problem.num_impulses:
        raise ValueError("lip.D_k must have one entry per impulse")
    if sg.horizon < problem.horizon - 1e-12:
        raise ValueError("semigroup bound horizon is shorter than the problem horizon")
    lhs = 2.0 * problem.horizon * sg.M * lip.L_G * float(sum(lip.D_k))
    return CertificateReport(lhs=lhs, threshold=1.0, passed=lhs < 1.0)


def _reduction_instance(problem: ImpulsiveProblem, lip: LipschitzData, sg: SemigroupBound,
                        tilde: bool = False, grid_points: int = 2048) -> PachpatteInstance:
    """Inequality instance with f = M N_V, g = N_U, beta_k = M L_G D_k."""
    if len(lip.D_k) != problem.num_impulses:
        raise ValueError("lip.D_k must have one entry per impulse")
    if tilde:
        if lip.N_V_tilde is None:
            raise ValueError("lip.N_V_tilde is required for the parameter bound")
        NV, LG = lip.N_V_tilde, lip.L_G_tilde
    else:
        NV, LG = lip.N_V, lip.L_G
    M = sg.M
    beta = np.array([M * LG * d for d in lip.D_k])
    return PachpatteInstance(
        n=lambda t: 1.0,
        f=lambda t, NV=NV: M * float(NV(t)),
        g=lip.N_U,
        impulse_times=problem.impulse_times,
        beta=beta,
        theta=problem.theta_offsets,
        tau=problem.tau_offsets,
        horizon=problem.horizon,
        grid_points=grid_points,
    )


def _growth_tail(inst: PachpatteInstance, t_query: float) -> float:
    """prod_{t_k < t_query} C_k * exp of the horizon-uniform exponential from t_alpha."""
    tk = inst.impulse_times
    alpha = int(np.searchsorted(tk, t_query, side="left"))
    t_alpha = float(tk[alpha - 1]) if alpha >= 1 else 0.0
    prod = float(np.prod(inst.Ck_values[:alpha])) if alpha else 1.0
    return prod * math.exp(inst._F_at(inst.horizon) - inst._F_at(t_alpha))


def _zero_segment(problem: ImpulsiveProblem) -> HistorySegment:
    return HistorySegment(np.array([-problem.delay, 0.0]), np.zeros((2, problem.dimension)))


def apriori_bound(problem: ImpulsiveProblem, lip: LipschitzData, sg: SemigroupBound,
                  disc: Discretization = Discretization()) -> float:
    """Uniform bound on the solution's sigma norm.

    K = (M ||history|| + H + Q) * prod_k C_k * exp(int_{t_m}^b M N_V [1 + int N_U]),
    H integrating the zero-state forcing of V and Q summing the zero-state jumps.
    """
    n = problem.dimension
    M = sg.M
    inst = _reduction_instance(problem, lip, sg)
    xs = inst.grid

    hist_t = np.linspace(-problem.delay, 0.0,
                         max(2, math.ceil(problem.delay / disc.step - 1e-9) + 1))
    varsigma_norm = float(np.max(np.abs(problem.history_values(hist_t))))

    zero_seg = _zero_segment(problem)
    kernel = _KernelU(problem)
    segs = [zero_seg] * len(xs)
    z0 = _volterra_tri(kernel, xs, segs, n)
    v0 = np.array([np.max(np.abs(as_state(problem.V(float(s), zero_seg, z0[i]), n)))
                   for i, s in enumerate(xs)])
    H = M * float(np.trapezoid(v0, xs))

    Q = 0.0
    for k in range(1, problem.num_impulses + 1):
        lo, hi = problem.jump_window(k)
        if hi > lo:
            i0 = int(np.searchsorted(xs, lo, side="right"))
            i1 = int(np.searchsorted(xs, hi, side="left"))
            times = np.concatenate([[lo], xs[i0:i1], [hi]])
            gv = np.stack([as_state(problem.G(float(s), zero_seg), n) for s in times])
            wI = np.trapezoid(gv, times, axis=0)
        else:
            wI = np.zeros(n)
        Q += M * float(np.max(np.abs(as_state(problem.jump_maps[k - 1](wI), n))))

    prefactor = M * varsigma_norm + H + Q
    return prefactor * _growth_tail(inst, problem.horizon)


def dependence_initial_bound(problem: ImpulsiveProblem, lip: LipschitzData, sg: SemigroupBound,
                             varsigma_gap: float, t_query: Optional[float] = None) -> float:
    """Sigma-norm gap bound for two solutions differing only in their histories."""
    if varsigma_gap < 0.0:
        raise ValueError("varsigma_gap must be >= 0")
    tq = problem.horizon if t_query is None else float(t_query)
    inst = _reduction_instance(problem, lip, sg)
    return sg.M * float(varsigma_gap) * _growth_tail(inst, tq)


def dependence_parameter_bound(problem: ImpulsiveProblem, lip: LipschitzData, sg: SemigroupBound,
                               rho_gap: float, mu_gap: float,
                               t_query: Optional[float] = None) -> float:
    """Gap bound under parameter shifts rho in V and mu in G.

    Uses the parameter-uniform moduli N_V_tilde / L_G_tilde inside the growth
    factors and the sensitivities Omega_1 / Omega_2 in the prefactor.
    """
    if rho_gap < 0.0 or mu_gap < 0.0:
        raise ValueError("parameter gaps must be >= 0")
    tq = problem.horizon if t_query is None else float(t_query)
    b, M = problem.horizon, sg.M
    inst = _reduction_instance(problem, lip, sg, tilde=True)
    prefactor = b * M * lip.Omega_1 * float(rho_gap)
    prefactor += sum(2.0 * b * M * lip.Omega_2 * d * float(mu_gap) for d in lip.D_k)
    return prefactor * _growth_tail(inst, tq)


def dependence_function_bound(problem: ImpulsiveProblem, lip: LipschitzData, sg: SemigroupBound,
                              t_query: Optional[float] = None) -> float:
    """Gap bound against a perturbed system: (M J + b M P + sum M N_k) * growth."""
    if lip.P < 0.0 or lip.J < 0.0 or any(v < 0.0 for v in lip.N_k):
        raise ValueError("P, J, N_k must be >= 0")
    tq = problem.horizon if t_query is None else float(t_query)
    b, M = problem.horizon, sg.M
    inst = _reduction_instance(problem, lip, sg)
    prefactor = M * lip.J + b * M * lip.P + sum(M * v for v in lip.N_k)
    return prefactor * _growth_tail(inst, tq)


def _history_gap(a: ImpulsiveProblem, b: ImpulsiveProblem, samples: int = 1025) -> float:
    ts = np.linspace(-min(a.delay, b.delay), 0.0, samples)
    return float(np.max(np.abs(a.history_values(ts) - b.history_values(ts))))


def check_dependence(kind: str, problem_a: ImpulsiveProblem, problem_b: ImpulsiveProblem,
                     lip: LipschitzData, sg: SemigroupBound,
                     disc: Discretization = Discretization(),
                     control: PicardControl = PicardControl(),
                     rho_gap: float = 0.0, mu_gap: float = 0.0) -> DependenceReport:
    """Solve both problems and compare their sigma distance with the matching bound.

    The verdict allows a numerical budget of twice each solve's residual, since
    the bounds compare exact solutions.
    """
    traj_a, rep_a = solve_mild(problem_a, disc, control)
    traj_b, rep_b = solve_mild(problem_b, disc, control)
    empirical = sigma_diff(traj_a, traj_b)
    if kind == "initial":
        theoretical = dependence_initial_bound(problem_a, lip, sg, _history_gap(problem_a, problem_b))
    elif kind == "parameter":
        theoretical = dependence_parameter_bound(problem_a, lip, sg, rho_gap, mu_gap)
    elif kind == "function":
        theoretical = dependence_function_bound(problem_a, lip, sg)
    else:
        raise ValueError(f"unknown dependence kind {kind!r}")
    budget = 2.0 * (rep_a.final_residual + rep_b.final_residual)
    return DependenceReport(
        kind=kind,
        empirical=empirical,
        theoretical=theoretical,
        residual_budget=budget,
        dominated=empirical <= theoretical + budget,
    )


# ---------------------------------------------------------------------------
# randomized instances for inequality campaigns

def random_instance(rng: np.random.Generator, max_impulses: int = 3,
                    grid_points: int = 2048) -> PachpatteInstance:
    """Seeded random inequality instance with smooth bounded data.

    Amplitudes are capped so the growth factor stays desk-scale and float
    rounding cannot swamp the domination slack.
    """
    horizon = float(rng.uniform(0.8, 1.6))
    m = int(rng.integers(0, max_impulses + 1))
    for _ in range(64):
        tk = np.sort(rng.uniform(0.15 * horizon, 0.9 * horizon, size=m))
        if m < 2 or np.min(np.diff(tk)) > 0.05 * horizon:
            break
    beta = rng.uniform(0.0, 2.0, size=m)
    prev = np.concatenate([[0.0], tk[:-1]]) if m else np.empty(0)
    tau = rng.uniform(0.0, 1.0, size=m) * (tk - prev)
    theta = rng.uniform(0.0, 1.0, size=m) * tau

    def smooth(lo_amp, hi_amp):
        base = float(rng.uniform(0.0, lo_amp))
        amp = float(rng.uniform(0.1, hi_amp))
        freq = float(rng.uniform(0.5, 3.0))
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        return lambda t: base + amp * math.sin(freq * t + phase) ** 2

    c0 = float(rng.uniform(0.5, 2.0))
    c1 = float(rng.uniform(0.0, 1.0))
    return PachpatteInstance(
        n=lambda t: c0 + c1 * t,
        f=smooth(0.3, 0.7),
        g=smooth(0.3, 0.7),
        impulse_times=tk,
        beta=beta,
        theta=theta,
        tau=tau,
        horizon=horizon,
        grid_points=grid_points,
    )
