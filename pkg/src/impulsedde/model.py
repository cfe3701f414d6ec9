"""Problem instances for the impulsive delay Volterra system and its constants.

An ImpulsiveProblem bundles everything that defines

    w'(t) = A w(t) + V(t, w_t, int_0^t U(t, s, w_s) ds),  t in [0, b], t != t_k,
    w(t)  = history(t) on [-r, 0],
    w(t_k^+) - w(t_k^-) = I_k( int_{t_k - tau_k}^{t_k - theta_k} G(s, w_s) ds ),

with state space R^n under the sup norm. Kernels receive the delayed state as a
HistorySegment. U may additionally be called with a 1-D array as its first
argument (the outer time) and should then broadcast; the solver exploits this
and falls back to scalar calls when it does not hold. All callables must be
pure; instances are immutable and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .trajectory import HistorySegment

__all__ = [
    "ImpulsiveProblem",
    "LipschitzData",
    "FreeParameter",
    "CatalogEntry",
    "validate",
    "build_catalog",
    "get_entry",
    "as_state",
]


def as_state(x, n: int) -> np.ndarray:
    """Normalize a kernel return value to a length-n float vector."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        if n != 1:
            raise ValueError(f"expected a length-{n} vector, got a scalar")
        return a.reshape(1)
    if a.shape == (n,):
        return a
    raise ValueError(f"expected a length-{n} vector, got shape {a.shape}")


@dataclass(frozen=True)
class ImpulsiveProblem:
    dimension: int
    generator: np.ndarray
    V: Callable
    U: Callable
    G: Callable
    jump_maps: tuple
    impulse_times: np.ndarray
    theta_offsets: np.ndarray
    tau_offsets: np.ndarray
    delay: float
    history: Callable
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "generator", np.asarray(self.generator, dtype=float))
        object.__setattr__(self, "jump_maps", tuple(self.jump_maps))
        for name in ("impulse_times", "theta_offsets", "tau_offsets"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "delay", float(self.delay))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def num_impulses(self) -> int:
        return len(self.impulse_times)

    def jump_window(self, k: int) -> tuple:
        """[t_k - tau_k, t_k - theta_k] for the 1-based impulse index k."""
        if not 1 <= k <= self.num_impulses:
            raise IndexError(f"impulse index {k} out of range 1..{self.num_impulses}")
        tk = float(self.impulse_times[k - 1])
        return tk - float(self.tau_offsets[k - 1]), tk - float(self.theta_offsets[k - 1])

    def history_values(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return np.stack([as_state(self.history(float(t)), self.dimension) for t in times])


@dataclass(frozen=True)
class LipschitzData:
    """Constants and moduli feeding the growth and dependence bounds.

    N_V, N_U are the Lipschitz moduli of V and U; L_G and D_k those of G and
    the jump maps. Omega_1/Omega_2 bound the parameter sensitivity of V and G,
    N_V_tilde/L_G_tilde are the parameter-uniform moduli (with the range factor
    absorbed), and P, J, N_k are sup deviations against a perturbed system.
    """

    N_V: Callable
    N_U: Callable
    L_G: float
    D_k: tuple = ()
    Omega_1: float = 0.0
    Omega_2: float = 0.0
    N_V_tilde: Optional[Callable] = None
    L_G_tilde: float = 0.0
    P: float = 0.0
    J: float = 0.0
    N_k: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "D_k", tuple(float(d) for d in self.D_k))
        object.__setattr__(self, "N_k", tuple(float(v) for v in self.N_k))
        for name in ("L_G", "Omega_1", "Omega_2", "L_G_tilde", "P", "J"):
            object.__setattr__(self, name, float(getattr(self, name)))
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if any(d < 0.0 for d in self.D_k) or any(v < 0.0 for v in self.N_k):
            raise ValueError("D_k and N_k entries must be >= 0")


@dataclass(frozen=True)
class FreeParameter:
    default: float
    low: float
    high: float


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    problem: ImpulsiveProblem
    lipschitz: LipschitzData
    free_parameters: dict
    factory: Callable = field(repr=False, default=None)

    def instantiate(self, **overrides):
        """Build (problem, lipschitz) at the given parameter values.

        Unknown names and out-of-range values are rejected.
        """
        params = {}
        for name, fp in self.free_parameters.items():
            params[name] = fp.default
        for name, value in overrides.items():
            if name not in self.free_parameters:
                raise ValueError(f"{self.name} has no parameter {name!r}")
            fp = self.free_parameters[name]
            value = float(value)
            if not fp.low <= value <= fp.high:
                raise ValueError(
                    f"{self.name}.{name}={value} outside [{fp.low}, {fp.high}]"
                )
            params[name] = value
        return self.factory(**params)


# ---------------------------------------------------------------------------
# validation

def _probe_segment(problem: ImpulsiveProblem) -> HistorySegment:
    thetas = np.linspace(-problem.delay, 0.0, 9)
    thetas[-1] = 0.0
    return HistorySegment(thetas, problem.history_values(thetas))


def validate(problem: ImpulsiveProblem) -> list:
    """Check every structural invariant; returns a list of violation messages.

    Violations are data, not failures: an empty list means the instance is fit
    for the solver and the bound evaluators.
    """
    out = []
    n = problem.dimension
    if n < 1:
        out.append("dimension must be a positive integer")
        return out
    if problem.generator.shape != (n, n):
        out.append(f"generator must be {n}x{n}, got {problem.generator.shape}")
    elif not np.all(np.isfinite(problem.generator)):
        out.append("generator has non-finite entries")
    if not problem.delay > 0.0:
        out.append("delay must be > 0")
    if not problem.horizon > 0.0:
        out.append("horizon must be > 0")

    tk = problem.impulse_times
    m = len(tk)
    if len(problem.jump_maps) != m:
        out.append(f"jump_maps has length {len(problem.jump_maps)}, expected {m}")
    for name, arr in (("theta_offsets", problem.theta_offsets), ("tau_offsets", problem.tau_offsets)):
        if len(arr) != m:
            out.append(f"{name} has length {len(arr)}, expected {m}")
    for k in range(1, m):
        if tk[k] <= tk[k - 1]:
            out.append(f"impulse_times not strictly increasing at k={k + 1}")
    for k in range(m):
        if not 0.0 < tk[k] < problem.horizon:
            out.append(f"impulse time t_{k + 1}={tk[k]} outside (0, horizon)")
    if len(problem.theta_offsets) == m and len(problem.tau_offsets) == m:
        prev = 0.0
        for k in range(m):
            th, ta = problem.theta_offsets[k], problem.tau_offsets[k]
            gap = tk[k] - prev
            if not (0.0 <= th <= ta <= gap + 1e-12):
                out.append(
                    f"window offsets violate 0 <= theta_k <= tau_k <= t_k - t_(k-1) at k={k + 1}"
                )
            prev = tk[k]

    if out:
        return out

    # sampled continuity of the history and kernel shape probes
    try:
        ts = np.linspace(-problem.delay, 0.0, 1025)
        hv = problem.history_values(ts)
        jumps = np.max(np.abs(np.diff(hv, axis=0)), axis=1)
        scale = 1.0 + float(np.max(np.abs(hv)))
        if np.max(jumps) > 0.1 * scale:
            out.append("history fails the sampled continuity check")
    except Exception as exc:  # noqa: BLE001 - report, do not crash validation
        out.append(f"history evaluation failed: {exc}")
        return out

    seg = _probe_segment(problem)
    zero = np.zeros(n)
    try:
        as_state(problem.V(0.0, seg, zero), n)
    except Exception as exc:
        out.append(f"V probe failed: {exc}")
    try:
        u_scalar = as_state(problem.U(0.0, 0.0, seg), n)
        half = 0.5 * problem.horizon
        u_scalar2 = as_state(problem.U(half, 0.0, seg), n)
        try:
            batched = np.asarray(problem.U(np.array([0.0, half]), 0.0, seg), dtype=float)
        except Exception:
            batched = None  # scalar-only kernels are allowed
        if batched is not None and batched.size >= 1:
            b0 = _batch_row(batched, 0, 2, n)
            b1 = _batch_row(batched, 1, 2, n)
            if b0 is not None and b1 is not None:
                tol = 1e-10 * (1.0 + max(np.max(np.abs(u_scalar)), np.max(np.abs(u_scalar2))))
                if np.max(np.abs(b0 - u_scalar)) > tol or np.max(np.abs(b1 - u_scalar2)) > tol:
                    out.append("U broadcasts over its time argument but disagrees with scalar calls")
    except Exception as exc:
        out.append(f"U probe failed: {exc}")
    try:
        as_state(problem.G(0.0, seg), n)
    except Exception as exc:
        out.append(f"G probe failed: {exc}")
    for k, jump in enumerate(problem.jump_maps, start=1):
        try:
            as_state(jump(zero), n)
        except Exception as exc:
            out.append(f"I_{k} probe failed: {exc}")
    return out


def _batch_row(batched: np.ndarray, i: int, length: int, n: int):
    """Row i of a batched kernel result, or None if the shape is not batched."""
    if batched.ndim == 0:
        return np.full(n, float(batched))
    if batched.shape == (length, n):
        return batched[i]
    if n == 1 and batched.shape == (length,):
        return batched[i : i + 1]
    if batched.shape == (n,) and n != length:
        return batched
    return None


# ---------------------------------------------------------------------------
# catalog

def _paper_example(L_G=0.01, r_eff=1.0, u_constant=-1.0):
    """Scalar Volterra delay problem with one zero-width integral impulse.

    The semigroup is T(t)x = e^t x; the delayed reads happen at -r_eff and the
    jump window [t_1 - tau_1, t_1 - theta_1] collapses to a point, so the jump
    sin(0) vanishes identically.
    """
    c = 1.0 - np.sin(5.0)

    def V(t, w_t, z):
        return c - np.sin(w_t(-r_eff)[0]) + z

    def U(t, s, w_s):
        return u_constant + np.cos(w_s(-r_eff)[0])

    def G(s, w_s):
        return L_G * w_s(0.0)

    problem = ImpulsiveProblem(
        dimension=1,
        generator=[[1.0]],
        V=V,
        U=U,
        G=G,
        jump_maps=(np.sin,),
        impulse_times=[1.0],
        theta_offsets=[0.5],
        tau_offsets=[0.5],
        delay=r_eff,
        history=lambda t: t,
        horizon=2.0,
    )
    lip = LipschitzData(
        N_V=lambda t: 1.0,
        N_U=lambda t: 1.0,
        L_G=L_G,
        D_k=(1.0,),
        P=0.0,
        J=0.0,
        N_k=(0.0,),
    )
    return problem, lip


def _pure_semigroup():
    problem = ImpulsiveProblem(
        dimension=1,
        generator=[[1.0]],
        V=lambda t, w_t, z: 0.0,
        U=lambda t, s, w_s: 0.0,
        G=lambda s, w_s: 0.0,
        jump_maps=(),
        impulse_times=[],
        theta_offsets=[],
        tau_offsets=[],
        delay=1.0,
        history=lambda t: 1.0,
        horizon=2.0,
    )
    lip = LipschitzData(N_V=lambda t: 0.0, N_U=lambda t: 0.0, L_G=0.0)
    return problem, lip


def _method_of_steps(r=1.0):
    """w'(t) = w(t - r) with unit constant history: the classic stepping chain."""
    problem = ImpulsiveProblem(
        dimension=1,
        generator=[[0.0]],
        V=lambda t, w_t, z: w_t(-r),
        U=lambda t, s, w_s: 0.0,
        G=lambda s, w_s: 0.0,
        jump_maps=(),
        impulse_times=[],
        theta_offsets=[],
        tau_offsets=[],
        delay=r,
        history=lambda t: 1.0,
        horizon=2.0,
    )
    lip = LipschitzData(N_V=lambda t: 1.0, N_U=lambda t: 0.0, L_G=0.0)
    return problem, lip


def _windowed_impulse(L_G=0.05):
    """Planar problem with a genuine jump fed by a nonzero integration window."""
    A = [[0.0, 0.4], [-0.4, 0.0]]

    def V(t, w_t, z):
        return 0.3 * np.sin(w_t(-0.5)) + 0.2 * z

    def U(t, s, w_s):
        return 0.4 * np.tanh(w_s(-0.25))

    def G(s, w_s):
        return L_G * w_s(0.0)

    problem = ImpulsiveProblem(
        dimension=2,
        generator=A,
        V=V,
        U=U,
        G=G,
        jump_maps=(lambda x: 0.8 * x,),
        impulse_times=[0.5],
        theta_offsets=[0.1],
        tau_offsets=[0.3],
        delay=0.5,
        history=lambda t: np.array([0.2 + 0.1 * t, -0.1]),
        horizon=1.0,
    )
    lip = LipschitzData(
        N_V=lambda t: 0.3,
        N_U=lambda t: 0.4,
        L_G=L_G,
        D_k=(0.8,),
        P=0.0,
        J=0.0,
        N_k=(0.0,),
    )
    return problem, lip


def _parameter_family(rho=1.0, mu=1.0):
    """Scalar family V(t, rho, ., .), G(t, mu, .) for the sensitivity bounds.

    The moduli N_V_tilde and L_G_tilde are uniform over the parameter ranges
    [0.5, 1.5], so one LipschitzData serves every instantiation.
    """

    def V(t, w_t, z):
        return rho * (0.3 * np.sin(w_t(-0.5)[0]) + 0.2 * np.tanh(z[0]))

    def U(t, s, w_s):
        return 0.4 * np.sin(w_s(-0.25)[0])

    def G(s, w_s):
        return mu * 0.1 * np.sin(w_s(0.0)[0])

    problem = ImpulsiveProblem(
        dimension=1,
        generator=[[-0.5]],
        V=V,
        U=U,
        G=G,
        jump_maps=(lambda x: 0.5 * x,),
        impulse_times=[0.5],
        theta_offsets=[0.1],
        tau_offsets=[0.4],
        delay=0.5,
        history=lambda t: 0.4 * (1.0 + t),
        horizon=1.0,
    )
    lip = LipschitzData(
        N_V=lambda t: 0.3 * abs(rho),
        N_U=lambda t: 0.4,
        L_G=0.1 * abs(mu),
        D_k=(0.5,),
        Omega_1=0.5,
        Omega_2=0.1,
        N_V_tilde=lambda t: 0.45,
        L_G_tilde=0.15,
        N_k=(0.0,),
    )
    return problem, lip


def build_catalog() -> list:
    """All built-in problems, each with its constants and free parameters."""
    entries = []

    p, l = _paper_example()
    entries.append(
        CatalogEntry(
            name="paper_example",
            problem=p,
            lipschitz=l,
            free_parameters={
                "L_G": FreeParameter(0.01, 1e-6, 1.0),
                "r_eff": FreeParameter(1.0, 0.05, 1.0),
                "u_constant": FreeParameter(-1.0, -1.0, 1.0),
            },
            factory=_paper_example,
        )
    )

    p, l = _pure_semigroup()
    entries.append(
        CatalogEntry(
            name="pure_semigroup",
            problem=p,
            lipschitz=l,
            free_parameters={},
            factory=lambda: _pure_semigroup(),
        )
    )

    p, l = _method_of_steps()
    entries.append(
        CatalogEntry(
            name="method_of_steps",
            problem=p,
            lipschitz=l,
            free_parameters={"r": FreeParameter(1.0, 0.25, 2.0)},
            factory=_method_of_steps,
        )
    )

    p, l = _windowed_impulse()
    entries.append(
        CatalogEntry(
            name="windowed_impulse",
            problem=p,
            lipschitz=l,
            free_parameters={"L_G": FreeParameter(0.05, 1e-6, 0.6)},
            factory=_windowed_impulse,
        )
    )

    p, l = _parameter_family()
    entries.append(
        CatalogEntry(
            name="parameter_family",
            problem=p,
            lipschitz=l,
            free_parameters={
                "rho": FreeParameter(1.0, 0.5, 1.5),
                "mu": FreeParameter(1.0, 0.5, 1.5),
            },
            factory=_parameter_family,
        )
    )
    return entries


def get_entry(name: str) -> CatalogEntry:
    for entry in build_catalog():
        if entry.name == name:
            return entry
    known = ", ".join(e.name for e in build_catalog())
    raise KeyError(f"unknown catalog entry {name!r} (known: {known})")


def with_history(problem: ImpulsiveProblem, history: Callable) -> ImpulsiveProblem:
    """Copy of the problem with a replaced initial history."""
    return replace(problem, history=history)
