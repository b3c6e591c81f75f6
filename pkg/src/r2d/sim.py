"""Wavefront simulation under asynchronous switching, plus stability checks.

The plant switches on diagonals ``m = i + j``. After the switch at ``m_k``
the controller keeps the previous mode for ``lag_k`` diagonals, so on
``[m_k, m_k + lag_k)`` plant and controller are mismatched. Everything before
the first switch is matched.

Cells are evaluated diagonal by diagonal: cell ``(i, j)`` on diagonal ``m``
produces ``x^h(i+1, j)`` and ``x^v(i, j+1)`` on diagonal ``m + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import (
    BoundaryConditions,
    SwitchedRoesserSystem,
    UncertaintyRealization,
    check_valid,
    eval_uncertainty,
    realize_uncertain_matrices,
)
from .synthesis import DwellTimeScheme, SynthesisCertificate, theoretical_decay

DIVERGENCE_LIMIT = 1e12
ENERGY_FLOOR = 1e-300


class InvalidPlan(ValueError):
    pass


@dataclass(frozen=True)
class SwitchingPlan:
    """``modes[0]`` is active before ``instants[0]``; ``modes[k+1]`` from ``instants[k]`` on.

    Modes are 0-based indices.
    """

    instants: tuple[int, ...]
    modes: tuple[int, ...]
    lags: tuple[int, ...]
    horizon: int

    def segment(self, m: int) -> int:
        return int(np.searchsorted(self.instants, m, side="right"))

    def sigma(self, m: int) -> int:
        return self.modes[self.segment(m)]

    def mismatched(self, m: int) -> bool:
        seg = self.segment(m)
        return seg > 0 and m < self.instants[seg - 1] + self.lags[seg - 1]

    def sigma_ctrl(self, m: int) -> int:
        seg = self.segment(m)
        return self.modes[seg - 1] if self.mismatched(m) else self.modes[seg]

    def T_plus(self, z: int, D: int) -> int:
        """Mismatched length inside ``[z, D)``."""
        total = 0
        for m, lag in zip(self.instants, self.lags):
            lo, hi = max(m, z), min(m + lag, D)
            total += max(hi - lo, 0)
        return total

    def T_minus(self, z: int, D: int) -> int:
        return (D - z) - self.T_plus(z, D)

    def switch_count(self, z: int, D: int) -> int:
        """Plant switches strictly inside ``(z, D)``."""
        return sum(1 for m in self.instants if z < m < D)


def build_switching_plan(
    instants: Sequence[int], modes: Sequence[int], lags: Sequence[int] | int, horizon: int
) -> SwitchingPlan:
    instants = tuple(int(m) for m in instants)
    modes = tuple(int(k) for k in modes)
    if isinstance(lags, (int, np.integer)):
        lags = (int(lags),) * len(instants)
    lags = tuple(int(d) for d in lags)
    if horizon < 1:
        raise InvalidPlan("horizon must be at least 1")
    if len(modes) != len(instants) + 1:
        raise InvalidPlan("need one mode per segment (len(instants) + 1)")
    if len(lags) != len(instants):
        raise InvalidPlan("need one controller lag per switch")
    if any(m < 1 for m in instants):
        raise InvalidPlan("switch instants must be positive")
    if any(b <= a for a, b in zip(instants, instants[1:])):
        raise InvalidPlan("switch instants must be strictly increasing")
    if any(a == b for a, b in zip(modes, modes[1:])):
        raise InvalidPlan("consecutive modes must differ")
    if any(d < 0 for d in lags):
        raise InvalidPlan("controller lags must be nonnegative")
    for k in range(len(instants) - 1):
        if not lags[k] < instants[k + 1] - instants[k]:
            raise InvalidPlan(
                f"lag {lags[k]} at switch {k + 1} is not shorter than the gap "
                f"{instants[k + 1] - instants[k]} to the next switch"
            )
    if instants and lags[-1] > max(horizon - instants[-1], 0):
        raise InvalidPlan("the last lag runs past the horizon")
    return SwitchingPlan(instants, modes, lags, int(horizon))


def periodic_plan(tau_a: float, lag: int, horizon: int, n_modes: int, start_mode: int = 0) -> SwitchingPlan:
    """Switch at ``floor(k * tau_a)``, cycling through the modes.

    Gaps alternate between ``floor(tau_a)`` and ``ceil(tau_a)`` so the mean
    gap is ``tau_a``. The lag of a switch close to the horizon is clipped.
    """
    if n_modes < 2:
        return build_switching_plan((), (start_mode,), (), horizon)
    instants = []
    k = 1
    while math.floor(k * tau_a) < horizon:
        instants.append(math.floor(k * tau_a))
        k += 1
    modes = [(start_mode + s) % n_modes for s in range(len(instants) + 1)]
    lags = [min(lag, horizon - m) for m in instants]
    return build_switching_plan(instants, modes, lags, horizon)


@dataclass(frozen=True)
class DwellCheck:
    ok: bool
    switches: int
    allowed: float


def average_dwell_time_check(plan: SwitchingPlan, z: int, D: int, N0: float, tau_a: float) -> DwellCheck:
    if not z <= D <= plan.horizon:
        raise ValueError("need z <= D <= horizon")
    count = plan.switch_count(z, D)
    allowed = N0 + (D - z) / tau_a
    return DwellCheck(count <= allowed, count, allowed)


@dataclass
class TrajectoryGrid:
    n1: int
    n2: int
    d_h: int
    d_v: int
    horizon: int
    xh: np.ndarray  # [i + d_h, j]
    xv: np.ndarray  # [i, j + d_v]
    mode_sys: np.ndarray
    mode_ctrl: np.ndarray
    diverged: bool = False
    diverged_at: int | None = None

    def h(self, i: int, j: int) -> np.ndarray:
        return self.xh[i + self.d_h, j]

    def v(self, i: int, j: int) -> np.ndarray:
        return self.xv[i, j + self.d_v]

    def state(self, i: int, j: int) -> np.ndarray:
        return np.concatenate([self.h(i, j), self.v(i, j)])

    def cells(self, D: int):
        return [(i, D - i) for i in range(D + 1)]

    def diagonal_energy(self) -> np.ndarray:
        out = np.zeros(self.horizon + 1)
        for D in range(self.horizon + 1):
            out[D] = sum(
                float(self.h(i, j) @ self.h(i, j) + self.v(i, j) @ self.v(i, j)) for i, j in self.cells(D)
            )
        return out

    def c_norm(self, z: int) -> float:
        """Delay-window norm at diagonal ``z``: sup over lags ``0..d`` of the shifted sums."""
        best_h = max(
            sum(float(self.h(i + th, j) @ self.h(i + th, j)) for i, j in self.cells(z))
            for th in range(-self.d_h, 1)
        )
        best_v = max(
            sum(float(self.v(i, j + tv) @ self.v(i, j + tv)) for i, j in self.cells(z))
            for tv in range(-self.d_v, 1)
        )
        return best_h + best_v


def _gain_for(gains, k):
    return None if gains is None else np.asarray(gains[k], dtype=float)


def simulate(
    sys: SwitchedRoesserSystem,
    boundary: BoundaryConditions,
    plan: SwitchingPlan,
    uncertainty: Sequence[UncertaintyRealization] | None = None,
    gains: Sequence[np.ndarray] | None = None,
) -> TrajectoryGrid:
    """Closed loop ``u = K^{sigma'} x`` when ``gains`` is given, open loop otherwise."""
    check_valid(sys)
    problems = boundary.check_dims(sys)
    if problems:
        raise ValueError("; ".join(problems))
    if gains is not None and len(gains) != sys.n_modes:
        raise ValueError("need one gain per mode")
    if max(plan.modes) >= sys.n_modes:
        raise ValueError("the plan references a mode the system does not have")
    H = plan.horizon
    n1, n2, d_h, d_v = sys.n1, sys.n2, sys.d_h, sys.d_v
    xh = np.zeros((d_h + H + 1, H + 1, n1))
    xv = np.zeros((H + 1, d_v + H + 1, n2))
    for i in range(-d_h, 1):
        for j in range(H + 1):
            xh[i + d_h, j] = boundary.horizontal(i, j, n1)
    for i in range(H + 1):
        for j in range(-d_v, 1):
            xv[i, j + d_v] = boundary.vertical(i, j, n2)
    mode_sys = np.array([plan.sigma(m) for m in range(H + 1)])
    mode_ctrl = np.array([plan.sigma_ctrl(m) for m in range(H + 1)])
    grid = TrajectoryGrid(n1, n2, d_h, d_v, H, xh, xv, mode_sys, mode_ctrl)
    cache: dict = {}
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(H):
            k, kc = int(mode_sys[m]), int(mode_ctrl[m])
            for i in range(m + 1):
                j = m - i
                if uncertainty is None:
                    F = np.zeros((sys.r, sys.p))
                else:
                    F = eval_uncertainty(uncertainty[k], i, j)
                key = (k, kc, F.tobytes())
                if key not in cache:
                    a_hat, ad_hat, b_hat = realize_uncertain_matrices(sys, k, F)
                    K = _gain_for(gains, kc)
                    a_cl = a_hat if K is None else a_hat + b_hat @ K
                    cache[key] = (a_cl, ad_hat)
                a_cl, ad_hat = cache[key]
                x = np.concatenate([xh[i + d_h, j], xv[i, j + d_v]])
                xd = np.concatenate([xh[i, j], xv[i, j]])  # (i - d_h, j) and (i, j - d_v)
                nxt = a_cl @ x + ad_hat @ xd
                xh[i + 1 + d_h, j] = nxt[:n1]
                xv[i, j + 1 + d_v] = nxt[n1:]
            if not grid.diverged:
                top = max(
                    np.max(np.abs(xh[i + 1 + d_h, m - i])) for i in range(m + 1)
                )
                top = max(top, max(np.max(np.abs(xv[i, m - i + 1 + d_v])) for i in range(m + 1)))
                if not top <= DIVERGENCE_LIMIT:
                    grid.diverged = True
                    grid.diverged_at = m + 1
    return grid


@dataclass
class LyapunovTrace:
    cell_values: np.ndarray  # [i, j], NaN where i + j > horizon
    diagonal_sums: np.ndarray
    matched_evaluations: int = 0
    mismatched_evaluations: int = 0


def cell_functional(grid: TrajectoryGrid, i: int, j: int, P: np.ndarray, Q: np.ndarray, weight: float) -> float:
    """Lyapunov-Krasovskii value at one cell with delay sums weighted by ``weight**(lag - 1)``."""
    n1 = grid.n1
    Ph, Pv = P[:n1, :n1], P[n1:, n1:]
    Qh, Qv = Q[:n1, :n1], Q[n1:, n1:]
    h, v = grid.h(i, j), grid.v(i, j)
    val = float(h @ Ph @ h + v @ Pv @ v)
    for r in range(i - grid.d_h, i):
        x = grid.h(r, j)
        val += float(x @ Qh @ x) * weight ** (i - r - 1)
    for t in range(j - grid.d_v, j):
        x = grid.v(i, t)
        val += float(x @ Qv @ x) * weight ** (j - t - 1)
    return val


def functional_trace(
    grid: TrajectoryGrid, pick: Callable[[int], tuple[np.ndarray, np.ndarray, bool]], weight: float
) -> LyapunovTrace:
    """``pick(D)`` returns ``(P, Q, mismatched)`` for diagonal ``D``."""
    H = grid.horizon
    values = np.full((H + 1, H + 1), np.nan)
    sums = np.zeros(H + 1)
    trace = LyapunovTrace(values, sums)
    for D in range(H + 1):
        P, Q, mism = pick(D)
        if mism:
            trace.mismatched_evaluations += D + 1
        else:
            trace.matched_evaluations += D + 1
        for i, j in grid.cells(D):
            values[i, j] = cell_functional(grid, i, j, P, Q, weight)
        sums[D] = np.sum([values[i, j] for i, j in grid.cells(D)])
    return trace


def lyapunov_trace(grid: TrajectoryGrid, cert: SynthesisCertificate, plan: SwitchingPlan) -> LyapunovTrace:
    """Piecewise functional: matched ``(P^k, Q^k)`` or mismatched ``(P^kl, Q^kl)`` by diagonal.

    Delay sums use ``alpha`` weights in both pieces.
    """
    matched = [cert.lyapunov_matched(k) for k in range(len(cert.matched))]
    mism = {key: cert.lyapunov_mismatched(*key) for key in cert.mismatched}

    def pick(D):
        if plan.mismatched(D):
            P, Q = mism[(plan.sigma_ctrl(D), plan.sigma(D))]
            return P, Q, True
        P, Q = matched[plan.sigma(D)]
        return P, Q, False

    return functional_trace(grid, pick, cert.alpha)


@dataclass
class StabilityEstimate:
    diagonal_energy: np.ndarray
    z: int
    c: float
    eta: float
    c_norm: float
    fit_window: tuple[int, int]
    degenerate: bool = False


def estimate_decay(grid: TrajectoryGrid, z: int) -> StabilityEstimate:
    """Log-linear least-squares fit of the diagonal energy after ``z``.

    The first ``max(d_h, d_v)`` diagonals after ``z`` are skipped. A zero (or
    fully underflowed) trajectory yields ``c = inf`` and ``degenerate``.
    """
    energy = grid.diagonal_energy()
    if not 0 <= z <= grid.horizon:
        raise ValueError("z must lie within the horizon")
    start = min(z + max(grid.d_h, grid.d_v), grid.horizon)
    Ds = np.arange(start, grid.horizon + 1)
    e = energy[start:]
    keep = np.isfinite(e) & (e > ENERGY_FLOOR)
    cn = grid.c_norm(z)
    if keep.sum() < 2:
        return StabilityEstimate(energy, z, math.inf, 0.0, cn, (start, grid.horizon), degenerate=True)
    slope, intercept = np.polyfit(Ds[keep] - z, np.log(e[keep]), 1)
    eta = math.exp(intercept) / cn if cn > 0 else math.nan
    return StabilityEstimate(energy, z, float(-slope), float(eta), cn, (start, grid.horizon))


@dataclass
class BoundVerification:
    status: str  # pass, fail or not-applicable
    z: int
    per_diagonal: list[tuple[int, float, float, bool]] = field(default_factory=list)
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def realized_ratio(plan: SwitchingPlan, z: int, D: int) -> float:
    tp = plan.T_plus(z, D)
    return math.inf if tp == 0 else plan.T_minus(z, D) / tp


def dwell_conditions(
    plan: SwitchingPlan, cert: SynthesisCertificate, scheme: DwellTimeScheme, z: int
) -> tuple[bool, str]:
    """Whether the plan meets both dwell conditions on every window ``[z, D]``."""
    if not scheme.tau_a > cert.tau_a_star:
        return False, f"tau_a {scheme.tau_a:g} does not exceed tau_a* {cert.tau_a_star:.4g}"
    for D in range(z + 1, plan.horizon + 1):
        r = realized_ratio(plan, z, D)
        if r < cert.required_ratio:
            return False, f"matched/mismatched ratio {r:.4g} on [{z},{D}) below required {cert.required_ratio:.4g}"
        if not average_dwell_time_check(plan, z, D, scheme.N0, scheme.tau_a).ok:
            return False, f"more switches in ({z},{D}) than the average dwell time allows"
    return True, ""


def verify_bound(
    estimate: StabilityEstimate,
    cert: SynthesisCertificate,
    scheme: DwellTimeScheme,
    plan: SwitchingPlan,
    z: int | None = None,
) -> BoundVerification:
    z = estimate.z if z is None else z
    ok, reason = dwell_conditions(plan, cert, scheme, z)
    if not ok:
        return BoundVerification("not-applicable", z, reason=reason)
    rows = []
    for D in range(z, len(estimate.diagonal_energy)):
        bound = theoretical_decay(cert, scheme, z, D) * estimate.c_norm
        measured = float(estimate.diagonal_energy[D])
        rows.append((D, measured, bound, measured <= bound))
    status = "pass" if all(r[3] for r in rows) else "fail"
    return BoundVerification(status, z, rows)
