"""Strict feasibility for small LMI problems.

Phase-1 spectral minimax: minimize ``t(v) = max_c lambda_max(F_c(v))`` with
projected gradient descent on the log-sum-exp smoothing of all constraint
eigenvalues. Positive-definite variables are projected onto the cone shifted
by ``delta_pd`` after every step. The method never certifies infeasibility;
a problem is only reported infeasible at the configured tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .lmi import LmiProblem

log = logging.getLogger(__name__)

FEASIBLE = "feasible"
INFEASIBLE = "infeasible-at-tolerance"
ITERATION_LIMIT = "iteration-limit"

RESTART_SCALES = (1.0, 0.1, 10.0, 0.3, 3.0, 0.03, 30.0, 100.0)


@dataclass(frozen=True)
class SolverConfig:
    smoothing: float = 1e3
    max_iter: int = 20000
    restarts: int = 8
    armijo: float = 1e-4
    min_step: float = 1e-14
    delta_pd: float = 1e-7
    strict_rel: float = 1e-7
    # stop a restart once the margin reaches this (relative to 1 + ||v||_inf)
    target_margin: float = 1e-3
    stall_window: int = 400
    stall_rel: float = 1e-9
    # iterations allowed after a restart first becomes strictly feasible
    polish_iters: int = 500
    # checkpoint spacing for the extrapolated-limit stall test
    trend_window: int = 200
    trend_ratio: float = 0.95
    bound: float = 1e4


@dataclass
class FeasibilityReport:
    status: str
    assignment: dict | None
    margin: float
    iterations: int
    history: list[float] = field(default_factory=list)
    pd_min: float = float("nan")
    restarts_used: int = 0
    note: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


@dataclass(frozen=True)
class AssignmentCheck:
    constraint_lambda_max: dict[str, float]
    pd_min: dict[str, float]

    @property
    def worst(self) -> float:
        return max(self.constraint_lambda_max.values())

    @property
    def pd_ok(self) -> bool:
        return all(v > 0 for v in self.pd_min.values())


def check_assignment(problem: LmiProblem, assignment) -> AssignmentCheck:
    """Exact per-constraint ``lambda_max`` and PD minima, via the Jacobi kernel."""
    lam = {c.name: numerics.lambda_max(c.evaluate(assignment)) for c in problem.constraints}
    pd = {v.name: v.min_eig(assignment[v.name]) for v in problem.variables if v.positive}
    return AssignmentCheck(lam, pd)


def strict_delta(problem: LmiProblem, config: SolverConfig | None = None) -> float:
    rel = (config or SolverConfig()).strict_rel
    return max(rel * (1.0 + np.linalg.norm(c.evaluate_constant())) for c in problem.constraints)


class _Compiled:
    def __init__(self, problem: LmiProblem, config: SolverConfig):
        self.problem = problem
        self.config = config
        self.basis = problem.basis
        self.slices = problem.slices()
        self.pd_vars = [v for v in problem.variables if v.positive]
        # without constant terms the sign of every constraint is scale free, so
        # iterates are kept at unit size; otherwise descent just shrinks them
        self.homogeneous = all(not np.any(f0) for f0, _ in self.basis)

    def matrices(self, vec):
        return [f0 + np.tensordot(vec, g, axes=1) for f0, g in self.basis]

    def spectra(self, vec):
        return [np.linalg.eigh(m) for m in self.matrices(vec)]

    def true_max(self, vec) -> float:
        return max(float(np.linalg.eigvalsh(m)[-1]) for m in self.matrices(vec))

    def smooth(self, vec, with_grad=False):
        beta = self.config.smoothing
        specs = self.spectra(vec)
        top = max(w[-1] for w, _ in specs)
        expo = [np.exp(beta * (w - top)) for w, _ in specs]
        total = sum(e.sum() for e in expo)
        value = top + np.log(total) / beta
        if not with_grad:
            return value, top
        grad = np.zeros(len(vec))
        for (w, u), e, (_, g) in zip(specs, expo, self.basis):
            s = (u * (e / total)) @ u.T
            grad += np.tensordot(g, s, axes=([1, 2], [0, 1]))
        return value, top, grad

    def project(self, vec):
        vec = vec.copy()
        big = np.max(np.abs(vec)) if vec.size else 0.0
        if big > self.config.bound:
            vec *= self.config.bound / big
        vec = self._pd_floor(vec)
        if self.homogeneous:
            big = np.max(np.abs(vec))
            if big > 0:
                vec = self._pd_floor(vec / big)
        return vec

    def _pd_floor(self, vec):
        dpd = self.config.delta_pd
        for var in self.pd_vars:
            sl = self.slices[var.name]
            if var.kind == "scalar":
                vec[sl] = max(vec[sl][0], dpd)
                continue
            value = var.unpack(vec[sl])
            w, u = np.linalg.eigh(value)
            if w[0] < dpd:
                value = (u * np.maximum(w, dpd)) @ u.T
                vec[sl] = var.pack(value)
        return vec

    def pd_min(self, vec) -> float:
        mins = []
        for var in self.pd_vars:
            value = var.unpack(vec[self.slices[var.name]])
            mins.append(float(value) if var.kind == "scalar" else float(np.linalg.eigvalsh(value)[0]))
        return min(mins) if mins else float("inf")

    def initial(self, scale: float, rng: np.random.Generator, perturb: bool):
        init = {}
        for var in self.problem.variables:
            if var.kind == "blockdiag":
                init[var.name] = scale * np.eye(var.shape[0])
            elif var.kind == "full":
                init[var.name] = np.zeros(var.shape)
            else:
                init[var.name] = 1.0
        vec = self.problem.pack(init)
        if perturb:
            vec = vec + 1e-2 * scale * rng.standard_normal(vec.size)
        return self.project(vec)


def _converging_above(points: list[float], level: float, ratio: float) -> bool:
    """Whether the last three checkpoints decay geometrically to a limit above ``level``.

    Gains ``g1, g2`` between checkpoints with ``g2 / g1 < ratio`` are
    extrapolated as a geometric series (Aitken); linear progress is left alone.
    """
    if len(points) < 3 or points[-1] <= level:
        return False
    c0, c1, c2 = points[-3:]
    g1, g2 = c0 - c1, c1 - c2
    if g2 <= 0:
        return True
    if g1 <= 0:
        return False
    rho = g2 / g1
    if rho >= ratio:
        return False
    return c2 - g2 * rho / (1.0 - rho) > level


def solve_feasibility(problem: LmiProblem, seed: int = 0, config: SolverConfig | None = None) -> FeasibilityReport:
    config = config or SolverConfig()
    comp = _Compiled(problem, config)
    delta = strict_delta(problem, config)
    rng = np.random.default_rng(seed)
    history: list[float] = []
    best_vec = None
    best_t = np.inf
    iterations = 0
    hit_cap = False
    used = 0
    for r in range(config.restarts):
        used = r + 1
        scale = RESTART_SCALES[r % len(RESTART_SCALES)]
        vec = comp.initial(scale, rng, perturb=r > 0)
        value, top, grad = comp.smooth(vec, with_grad=True)
        restart_best = top
        last_gain = 0
        first_feasible = None
        checkpoints = [restart_best]
        if top < best_t:
            best_t, best_vec = top, vec
        history.append(best_t)
        for it in range(config.max_iter):
            iterations += 1
            if restart_best <= -max(delta, config.target_margin * (1.0 + np.max(np.abs(vec)))):
                break
            step = 1.0
            while True:
                cand = comp.project(vec - step * grad)
                diff = vec - cand
                cval, ctop = comp.smooth(cand)
                if cval <= value - config.armijo * float(grad @ diff) and np.any(diff):
                    break
                step *= 0.5
                if step < config.min_step:
                    cand = None
                    break
            if cand is None:
                break
            vec = cand
            value, top, grad = comp.smooth(vec, with_grad=True)
            if top < restart_best - config.stall_rel * max(1.0, abs(restart_best)):
                restart_best = top
                last_gain = it
            if top < best_t:
                best_t, best_vec = top, vec
            history.append(best_t)
            if it - last_gain > config.stall_window:
                break
            if (it + 1) % config.trend_window == 0:
                checkpoints.append(restart_best)
                if _converging_above(checkpoints, -delta, config.trend_ratio):
                    break
            if first_feasible is None and restart_best <= -delta:
                first_feasible = it
            if first_feasible is not None and it - first_feasible > config.polish_iters:
                break
        else:
            hit_cap = True
        log.debug("%s restart %d: best %.3e after %d iterations", problem.name, r, restart_best, iterations)
        if best_t <= -delta and comp.pd_min(best_vec) >= config.delta_pd * (1 - 1e-9):
            break
    pd_min = comp.pd_min(best_vec)
    assignment = problem.unpack(best_vec)
    if best_t <= -delta and pd_min >= config.delta_pd * (1 - 1e-9):
        status = FEASIBLE
        note = ""
    elif hit_cap:
        status = ITERATION_LIMIT
        note = "iteration cap reached; best assignment returned"
    else:
        status = INFEASIBLE
        note = "margin stalled above the strict tolerance; this is not an infeasibility certificate"
    return FeasibilityReport(
        status=status,
        assignment=assignment,
        margin=-best_t,
        iterations=iterations,
        history=history,
        pd_min=pd_min,
        restarts_used=used,
        note=note,
    )
