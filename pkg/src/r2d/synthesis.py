"""Four-step asynchronous switching controller design.

1. Solve the matched-period LMI per mode and extract ``K = W X^-1``.
2. Fix the gains and solve the mismatched-period LMI per ordered pair.
3. Take the smallest coupling constants ``mu1, mu2`` allowed by the
   Lyapunov matrix comparisons, subject to ``mu1 * mu2 * mu >= 1``.
4. Pick the decay margin ``lambda_star`` (directly or from a required
   matched/mismatched ratio) and compute the minimal average dwell time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import lmi, numerics, sdp
from .model import SwitchedRoesserSystem, check_valid

log = logging.getLogger(__name__)

MU_FLOOR_SLACK = 1e-12
BETA_RETRY_FACTOR = 1.25
BETA_RETRY_MAX = 4.0


class SynthesisFailure(RuntimeError):
    """An LMI of the design procedure was not found feasible."""

    def __init__(self, stage: str, lmi_name: str, report: sdp.FeasibilityReport | None, hint: str = ""):
        msg = f"{stage}: LMI {lmi_name} not feasible"
        if report is not None:
            msg += f" ({report.status}, best margin {report.margin:.3e})"
        if hint:
            msg += f"; {hint}"
        super().__init__(msg)
        self.stage = stage
        self.lmi_name = lmi_name
        self.report = report


@dataclass
class MatchedSolution:
    mode: int
    X: np.ndarray
    Y: np.ndarray
    W: np.ndarray
    eps: float
    K: np.ndarray
    margin: float = float("nan")


@dataclass
class MismatchedSolution:
    k: int
    l: int
    X: np.ndarray
    Y: np.ndarray
    eps: float
    margin: float = float("nan")


@dataclass
class MuResult:
    mu1: float
    mu2: float
    mu: float
    floor_applied: bool


@dataclass
class DwellTimeResult:
    lambda_star: float
    tau_a_star: float
    required_ratio: float


@dataclass
class SynthesisCertificate:
    alpha: float
    beta: float
    d_h: int
    d_v: int
    matched: list[MatchedSolution]
    mismatched: dict[tuple[int, int], MismatchedSolution]
    mu1: float
    mu2: float
    mu: float
    mu_floor_applied: bool
    lambda_star: float
    tau_a_star: float
    required_ratio: float
    zeta1: float
    zeta2: float
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def d_bar(self) -> int:
        return max(self.d_h, self.d_v)

    @property
    def lambda_minus(self) -> float:
        return -math.log(self.alpha)

    @property
    def lambda_plus(self) -> float:
        return math.log(self.beta)

    @property
    def gains(self) -> list[np.ndarray]:
        return [m.K for m in self.matched]

    def lyapunov_matched(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.matched[k]
        return numerics.inverse(m.X), _safe_inverse_or_zero(m.Y)

    def lyapunov_mismatched(self, k: int, l: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.mismatched[(k, l)]
        return numerics.inverse(m.X), _safe_inverse_or_zero(m.Y)


@dataclass(frozen=True)
class DwellTimeScheme:
    tau_a: float
    N0: float = 1.0
    min_matched_ratio: float = 0.0

    @classmethod
    def from_certificate(cls, cert: SynthesisCertificate, tau_a: float, N0: float = 1.0) -> "DwellTimeScheme":
        if not tau_a > cert.tau_a_star:
            raise ValueError(f"tau_a = {tau_a} must exceed tau_a* = {cert.tau_a_star:.6g}")
        return cls(tau_a, N0, cert.required_ratio)


def _safe_inverse_or_zero(m: np.ndarray) -> np.ndarray:
    # delay-free designs carry no Y; their Q is zero
    return numerics.inverse(m) if np.any(m) else np.zeros_like(m)


def extract_gain(W: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.asarray(W, dtype=float) @ numerics.inverse(X)


def step1_solve_matched(
    sys: SwitchedRoesserSystem, alpha: float, seed: int = 0, config: sdp.SolverConfig | None = None
) -> list[MatchedSolution]:
    check_valid(sys)
    out = []
    for k in range(sys.n_modes):
        problem = (
            lmi.assemble_corollary1(sys, k, alpha) if sys.delay_free else lmi.assemble_thm1_matched(sys, k, alpha)
        )
        report = sdp.solve_feasibility(problem, seed=seed, config=config)
        if not report.feasible:
            raise SynthesisFailure("step 1", problem.name, report, f"mode {k + 1} has no matched-period solution")
        a = report.assignment
        Y = a.get("Y", np.zeros_like(a["X"]))
        out.append(MatchedSolution(k, a["X"], Y, a["W"], a["eps"], extract_gain(a["W"], a["X"]), report.margin))
        log.info("mode %d: matched LMI feasible, margin %.3e", k + 1, report.margin)
    return out


def beta_retry_ladder(beta: float) -> list[float]:
    out = []
    b = beta
    while b * BETA_RETRY_FACTOR <= BETA_RETRY_MAX + 1e-12:
        b *= BETA_RETRY_FACTOR
        out.append(round(b, 6))
    return out


def step2_solve_mismatched(
    sys: SwitchedRoesserSystem,
    gains: list[np.ndarray],
    beta: float,
    seed: int = 0,
    config: sdp.SolverConfig | None = None,
) -> dict[tuple[int, int], MismatchedSolution]:
    check_valid(sys)
    out = {}
    for k in range(sys.n_modes):
        for l in range(sys.n_modes):
            if k == l:
                continue
            if sys.delay_free:
                problem = lmi.assemble_corollary1(sys, k, beta, l=l, K=gains[k])
            else:
                problem = lmi.assemble_thm1_mismatched(sys, k, l, gains[k], beta)
            report = sdp.solve_feasibility(problem, seed=seed, config=config)
            if not report.feasible:
                ladder = ", ".join(f"{b:g}" for b in beta_retry_ladder(beta))
                hint = f"pair ({k + 1},{l + 1}); retry with a larger beta" + (f" (e.g. {ladder})" if ladder else "")
                raise SynthesisFailure("step 2", problem.name, report, hint)
            a = report.assignment
            Y = a.get("Y", np.zeros_like(a["X"]))
            out[(k, l)] = MismatchedSolution(k, l, a["X"], Y, a["eps"], report.margin)
            log.info("pair (%d,%d): mismatched LMI feasible, margin %.3e", k + 1, l + 1, report.margin)
    return out


def step3_minimize_mu(
    matched_X: list[np.ndarray],
    matched_Y: list[np.ndarray] | None,
    mismatched_X: dict[tuple[int, int], np.ndarray],
    mismatched_Y: dict[tuple[int, int], np.ndarray] | None,
    alpha: float,
    beta: float,
    d_h: int,
    d_v: int,
) -> MuResult:
    """Tightest ``mu1``, ``mu2`` with
    ``X_l^-1 <= mu1 X_kl^-1``, ``Y_l^-1 <= mu1 Y_kl^-1``,
    ``X_kl^-1 <= mu2 X_k^-1`` and ``Y_kl^-1 <= mu2 mu Y_k^-1``.

    ``Y`` arguments may be None for delay-free designs. With a single mode
    there are no pairs and ``mu1 = mu2 = 1``.
    """
    mu = (alpha / beta) ** max(d_h, d_v)
    supplied = list(matched_X) + list(mismatched_X.values())
    if matched_Y is not None and mismatched_Y is not None:
        supplied += list(matched_Y) + list(mismatched_Y.values())
    for m in supplied:
        if not numerics.is_positive_definite(m):
            raise numerics.NotPositiveDefinite("step 3 needs positive definite X and Y matrices")
    if not mismatched_X:
        return MuResult(1.0, 1.0, mu, False)
    inv = numerics.inverse
    mu1 = mu2 = -np.inf
    for (k, l), xkl in mismatched_X.items():
        mu1 = max(mu1, numerics.gen_eig_max(inv(matched_X[l]), inv(xkl)))
        mu2 = max(mu2, numerics.gen_eig_max(inv(xkl), inv(matched_X[k])))
        if matched_Y is not None and mismatched_Y is not None:
            ykl = mismatched_Y[(k, l)]
            mu1 = max(mu1, numerics.gen_eig_max(inv(matched_Y[l]), inv(ykl)))
            mu2 = max(mu2, numerics.gen_eig_max(inv(ykl), inv(matched_Y[k])) / mu)
    floor = False
    if mu1 * mu2 * mu < 1.0:
        mu2 = (1.0 / (mu1 * mu)) * (1.0 + MU_FLOOR_SLACK)
        floor = True
    return MuResult(float(mu1), float(mu2), mu, floor)


def lambda_star_from_ratio(ratio: float, lambda_minus: float, lambda_plus: float) -> float:
    return (ratio * lambda_minus - lambda_plus) / (ratio + 1.0)


def step4_dwell_time(
    mu1: float,
    mu2: float,
    lambda_minus: float,
    lambda_plus: float,
    lambda_star: float | None = None,
    ratio: float | None = None,
) -> DwellTimeResult:
    if (lambda_star is None) == (ratio is None):
        raise ValueError("give exactly one of lambda_star and ratio")
    if ratio is not None:
        lambda_star = lambda_star_from_ratio(ratio, lambda_minus, lambda_plus)
    if not 0.0 < lambda_star < lambda_minus:
        raise ValueError(f"lambda_star = {lambda_star:.6g} must lie in (0, {lambda_minus:.6g})")
    tau = math.log(mu1 * mu2) / lambda_star
    required = (lambda_plus + lambda_star) / (lambda_minus - lambda_star)
    return DwellTimeResult(lambda_star, tau, required)


def bound_constants(
    P_list: list[np.ndarray], Q_list: list[np.ndarray], d_h: int, d_v: int
) -> tuple[float, float]:
    """``zeta1 = max(lambda_max(P) + d_bar lambda_max(Q))``, ``zeta2 = min lambda_min(P)``
    over every matched and mismatched Lyapunov pair supplied."""
    d_bar = max(d_h, d_v)
    zeta1 = max(numerics.lambda_max(P) + d_bar * numerics.lambda_max(Q) for P, Q in zip(P_list, Q_list))
    zeta2 = min(numerics.lambda_min(P) for P in P_list)
    if not zeta2 > 0:
        raise numerics.NotPositiveDefinite("a Lyapunov matrix is not positive definite")
    return float(zeta1), float(zeta2)


def certificate_lyapunov_pairs(cert: SynthesisCertificate) -> tuple[list[np.ndarray], list[np.ndarray]]:
    P, Q = [], []
    for k in range(len(cert.matched)):
        p, q = cert.lyapunov_matched(k)
        P.append(p)
        Q.append(q)
    for key in sorted(cert.mismatched):
        p, q = cert.lyapunov_mismatched(*key)
        P.append(p)
        Q.append(q)
    return P, Q


def assemble_certificate(
    sys: SwitchedRoesserSystem,
    alpha: float,
    beta: float,
    matched: list[MatchedSolution],
    mismatched: dict[tuple[int, int], MismatchedSolution],
    lambda_star: float | None = None,
    ratio: float | None = None,
    seed: int = 0,
) -> SynthesisCertificate:
    """Steps 3 and 4 plus the bound constants, from given LMI solutions."""
    with_y = not sys.delay_free
    mu = step3_minimize_mu(
        [m.X for m in matched],
        [m.Y for m in matched] if with_y else None,
        {key: s.X for key, s in mismatched.items()},
        {key: s.Y for key, s in mismatched.items()} if with_y else None,
        alpha,
        beta,
        sys.d_h,
        sys.d_v,
    )
    dwell = step4_dwell_time(mu.mu1, mu.mu2, -math.log(alpha), math.log(beta), lambda_star, ratio)
    P = [numerics.inverse(m.X) for m in matched] + [numerics.inverse(mismatched[k].X) for k in sorted(mismatched)]
    Q = [_safe_inverse_or_zero(m.Y) for m in matched] + [
        _safe_inverse_or_zero(mismatched[k].Y) for k in sorted(mismatched)
    ]
    zeta1, zeta2 = bound_constants(P, Q, sys.d_h, sys.d_v)
    return SynthesisCertificate(
        alpha=alpha,
        beta=beta,
        d_h=sys.d_h,
        d_v=sys.d_v,
        matched=matched,
        mismatched=mismatched,
        mu1=mu.mu1,
        mu2=mu.mu2,
        mu=mu.mu,
        mu_floor_applied=mu.floor_applied,
        lambda_star=dwell.lambda_star,
        tau_a_star=dwell.tau_a_star,
        required_ratio=dwell.required_ratio,
        zeta1=zeta1,
        zeta2=zeta2,
        seed=seed,
    )


def synthesize(
    sys: SwitchedRoesserSystem,
    alpha: float,
    beta: float,
    seed: int = 0,
    lambda_star: float | None = None,
    ratio: float | None = None,
    config: sdp.SolverConfig | None = None,
) -> SynthesisCertificate:
    """Run all four design steps; raises SynthesisFailure naming the failing LMI."""
    if not 0.0 < alpha < 1.0 < beta:
        raise ValueError("need 0 < alpha < 1 < beta")
    if lambda_star is None and ratio is None:
        raise ValueError("give lambda_star or a target matched/mismatched ratio")
    matched = step1_solve_matched(sys, alpha, seed, config)
    mismatched = step2_solve_mismatched(sys, [m.K for m in matched], beta, seed, config)
    return assemble_certificate(sys, alpha, beta, matched, mismatched, lambda_star, ratio, seed)


def theoretical_decay(cert: SynthesisCertificate, scheme: DwellTimeScheme, z: int, D: int) -> float:
    """Upper bound on the diagonal energy at ``D`` relative to the delay-window norm at ``z``."""
    if not scheme.tau_a > 0:
        raise ValueError("tau_a must be positive")
    if D < z:
        raise ValueError("D must not precede z")
    m12 = cert.mu1 * cert.mu2
    rate = math.log(m12) / scheme.tau_a - cert.lambda_star
    return (cert.zeta1 / cert.zeta2) * max(cert.mu1, 1.0) * m12**scheme.N0 * math.exp(rate * (D - z))


@dataclass
class CertificateCheck:
    name: str
    lambda_max: float
    pd_min: dict[str, float]
    delta: float


def check_certificate(sys: SwitchedRoesserSystem, cert: SynthesisCertificate) -> list[CertificateCheck]:
    """Re-evaluate every design LMI at the certificate's matrices."""
    out = []
    for m in cert.matched:
        if sys.delay_free:
            problem = lmi.assemble_corollary1(sys, m.mode, cert.alpha)
        else:
            problem = lmi.assemble_thm1_matched(sys, m.mode, cert.alpha)
        a = {"X": m.X, "Y": m.Y, "W": m.W, "eps": m.eps}
        res = sdp.check_assignment(problem, a)
        out.append(CertificateCheck(problem.name, res.worst, res.pd_min, sdp.strict_delta(problem)))
    for (k, l), s in sorted(cert.mismatched.items()):
        K = cert.matched[k].K
        if sys.delay_free:
            problem = lmi.assemble_corollary1(sys, k, cert.beta, l=l, K=K)
        else:
            problem = lmi.assemble_thm1_mismatched(sys, k, l, K, cert.beta)
        res = sdp.check_assignment(problem, {"X": s.X, "Y": s.Y, "eps": s.eps})
        out.append(CertificateCheck(problem.name, res.worst, res.pd_min, sdp.strict_delta(problem)))
    return out
