"""Affine symmetric-matrix inequalities over structured decision variables.

An :class:`AffineLmi` is a block grid. Each block holds a constant plus a sum
of terms ``L @ V @ R`` (or ``L @ V.T @ R``) in one decision variable ``V``;
off-diagonal blocks are stored once, above the diagonal, and mirrored.
Diagonal blocks are symmetrized, which is exact for structured variables and
gives a well-defined evaluation for arbitrary substituted matrices.

Every constraint means ``F(v) < 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping

import numpy as np

from . import numerics
from .model import SwitchedRoesserSystem, check_valid

STRICT_REL = 1e-7
MAX_DELAY = 64

Assignment = Mapping[str, "np.ndarray | float"]


@dataclass(frozen=True)
class DecisionVariable:
    """``kind`` is ``blockdiag`` (symmetric, ``dims`` = block orders),
    ``full`` (``dims`` = (rows, cols)) or ``scalar``."""

    name: str
    kind: str
    dims: tuple[int, ...] = ()
    positive: bool = False

    def __post_init__(self):
        if self.kind not in ("blockdiag", "full", "scalar"):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def shape(self) -> tuple[int, ...]:
        if self.kind == "blockdiag":
            n = sum(self.dims)
            return (n, n)
        if self.kind == "full":
            return self.dims
        return ()

    @property
    def size(self) -> int:
        if self.kind == "blockdiag":
            return sum(b * (b + 1) // 2 for b in self.dims)
        if self.kind == "full":
            return self.dims[0] * self.dims[1]
        return 1

    def unpack(self, vec: np.ndarray):
        if self.kind == "scalar":
            return float(vec[0])
        if self.kind == "full":
            return np.asarray(vec, dtype=float).reshape(self.dims).copy()
        n = sum(self.dims)
        out = np.zeros((n, n))
        pos = off = 0
        for b in self.dims:
            iu = np.triu_indices(b)
            blk = np.zeros((b, b))
            blk[iu] = vec[pos : pos + len(iu[0])]
            blk = blk + np.triu(blk, 1).T
            out[off : off + b, off : off + b] = blk
            pos += len(iu[0])
            off += b
        return out

    def pack(self, value) -> np.ndarray:
        """Parameters of ``value``; off-block entries of a blockdiag value are dropped."""
        if self.kind == "scalar":
            return np.array([float(value)])
        value = np.asarray(value, dtype=float)
        if value.shape != self.shape:
            raise ValueError(f"{self.name}: expected shape {self.shape}, got {value.shape}")
        if self.kind == "full":
            return value.reshape(-1).copy()
        parts = []
        off = 0
        for b in self.dims:
            blk = numerics.symmetrize(value[off : off + b, off : off + b])
            parts.append(blk[np.triu_indices(b)])
            off += b
        return np.concatenate(parts)

    def min_eig(self, value) -> float:
        if self.kind == "scalar":
            return float(value)
        return numerics.lambda_min(value)


@dataclass(frozen=True)
class Term:
    row: int
    col: int
    var: str
    left: np.ndarray
    right: np.ndarray
    transpose: bool = False

    def value(self, v) -> np.ndarray:
        if np.ndim(v) == 0:
            return float(v) * (self.left @ self.right)
        return self.left @ (np.asarray(v).T if self.transpose else np.asarray(v)) @ self.right


@dataclass(frozen=True)
class AffineLmi:
    name: str
    orders: tuple[int, ...]
    constant: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)
    terms: tuple[Term, ...] = ()

    @property
    def order(self) -> int:
        return sum(self.orders)

    def _offsets(self) -> list[int]:
        return list(np.concatenate([[0], np.cumsum(self.orders)]).astype(int))

    def _place(self, out: np.ndarray, r: int, c: int, blk: np.ndarray) -> None:
        off = self._offsets()
        rs = slice(off[r], off[r + 1])
        cs = slice(off[c], off[c + 1])
        if r == c:
            out[rs, cs] += 0.5 * (blk + blk.T)
        else:
            out[rs, cs] += blk
            out[cs, rs] += blk.T

    def evaluate(self, assignment: Assignment) -> np.ndarray:
        out = np.zeros((self.order, self.order))
        for (r, c), blk in self.constant.items():
            self._place(out, r, c, np.asarray(blk, dtype=float))
        for t in self.terms:
            self._place(out, t.row, t.col, t.value(assignment[t.var]))
        return out

    def evaluate_constant(self) -> np.ndarray:
        out = np.zeros((self.order, self.order))
        for (r, c), blk in self.constant.items():
            self._place(out, r, c, np.asarray(blk, dtype=float))
        return out

    def strict_margin(self) -> float:
        """The numeric margin ``delta`` that realizes ``< 0``."""
        return STRICT_REL * (1.0 + np.linalg.norm(self.evaluate_constant()))

    def variables(self) -> set[str]:
        return {t.var for t in self.terms}

    def delete_blocks(self, drop: set[int], name: str | None = None) -> "AffineLmi":
        keep = [b for b in range(len(self.orders)) if b not in drop]
        remap = {b: i for i, b in enumerate(keep)}
        const = {
            (remap[r], remap[c]): v for (r, c), v in self.constant.items() if r in remap and c in remap
        }
        terms = tuple(
            replace(t, row=remap[t.row], col=remap[t.col])
            for t in self.terms
            if t.row in remap and t.col in remap
        )
        return AffineLmi(name or self.name, tuple(self.orders[b] for b in keep), const, terms)

    def scaled(self, factor: float) -> "AffineLmi":
        const = {k: factor * np.asarray(v) for k, v in self.constant.items()}
        terms = tuple(replace(t, left=factor * t.left) for t in self.terms)
        return AffineLmi(self.name, self.orders, const, terms)


@dataclass(frozen=True)
class LmiProblem:
    name: str
    variables: tuple[DecisionVariable, ...]
    constraints: tuple[AffineLmi, ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        for c in self.constraints:
            missing = c.variables() - set(names)
            if missing:
                raise ValueError(f"constraint {c.name} references undeclared {sorted(missing)}")

    def variable(self, name: str) -> DecisionVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.variables)

    def unpack(self, vec: np.ndarray) -> dict:
        out = {}
        pos = 0
        for v in self.variables:
            out[v.name] = v.unpack(vec[pos : pos + v.size])
            pos += v.size
        return out

    def pack(self, assignment: Assignment) -> np.ndarray:
        return np.concatenate([v.pack(assignment[v.name]) for v in self.variables])

    def slices(self) -> dict[str, slice]:
        out = {}
        pos = 0
        for v in self.variables:
            out[v.name] = slice(pos, pos + v.size)
            pos += v.size
        return out

    @cached_property
    def basis(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per constraint ``(F0, G)`` with ``F(vec) = F0 + sum_i vec[i] * G[i]``."""
        zero = self.unpack(np.zeros(self.n_params))
        out = []
        for c in self.constraints:
            f0 = c.evaluate(zero)
            g = np.zeros((self.n_params, c.order, c.order))
            for i in range(self.n_params):
                e = np.zeros(self.n_params)
                e[i] = 1.0
                g[i] = c.evaluate(self.unpack(e)) - f0
            out.append((f0, g))
        return out

    def scaled(self, factor: float) -> "LmiProblem":
        return LmiProblem(self.name, self.variables, tuple(c.scaled(factor) for c in self.constraints))


def _eye(n: int) -> np.ndarray:
    return np.eye(n)


def delay_weights(rate: float, d_h: int, d_v: int, n1: int, n2: int) -> np.ndarray:
    """``diag(rate**d_h * I_h, rate**d_v * I_v)``."""
    if max(d_h, d_v) > MAX_DELAY:
        raise ValueError(f"delays above {MAX_DELAY} are not supported")
    return np.diag(np.concatenate([np.full(n1, rate**d_h), np.full(n2, rate**d_v)]))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def _check_beta(beta: float) -> None:
    if not beta > 1.0:
        raise ValueError(f"beta must exceed 1, got {beta}")


def _lemma_form(name, A, A_d, rate, d_h, d_v, n1) -> LmiProblem:
    A = np.asarray(A, dtype=float)
    A_d = np.asarray(A_d, dtype=float)
    n = A.shape[0]
    n2 = n - n1
    if n2 < 1 or A.shape != (n, n) or A_d.shape != (n, n):
        raise ValueError("A and A_d must be square of order n1 + n2 with n2 >= 1")
    lam = delay_weights(rate, d_h, d_v, n1, n2)
    I = _eye(n)
    terms = (
        Term(0, 0, "Q", I, I),
        Term(0, 0, "P", -rate * I, I),
        Term(0, 2, "P", A.T, I),
        Term(1, 1, "Q", -lam, I),
        Term(1, 2, "P", A_d.T, I),
        Term(2, 2, "P", -I, I),
    )
    lmi = AffineLmi(name, (n, n, n), {}, terms)
    variables = (
        DecisionVariable("P", "blockdiag", (n1, n2), positive=True),
        DecisionVariable("Q", "blockdiag", (n1, n2), positive=True),
    )
    return LmiProblem(name, variables, (lmi,))


def assemble_lemma3(A, A_d, alpha: float, d_h: int, d_v: int, n1: int) -> LmiProblem:
    """Delay-dependent contraction condition at rate ``alpha`` in ``(P, Q)``."""
    _check_alpha(alpha)
    return _lemma_form("lemma3", A, A_d, alpha, d_h, d_v, n1)


def assemble_lemma4(A, A_d, beta: float, d_h: int, d_v: int, n1: int) -> LmiProblem:
    """Bounded-growth condition at rate ``beta`` in ``(P, Q)``."""
    _check_beta(beta)
    return _lemma_form("lemma4", A, A_d, beta, d_h, d_v, n1)


def _synthesis_variables(sys: SwitchedRoesserSystem, with_gain: bool) -> tuple[DecisionVariable, ...]:
    out = [
        DecisionVariable("X", "blockdiag", (sys.n1, sys.n2), positive=True),
        DecisionVariable("Y", "blockdiag", (sys.n1, sys.n2), positive=True),
    ]
    if with_gain:
        out.append(DecisionVariable("W", "full", (sys.q, sys.n)))
    out.append(DecisionVariable("eps", "scalar", (), positive=True))
    return tuple(out)


def assemble_thm1_matched(sys: SwitchedRoesserSystem, k: int, alpha: float) -> LmiProblem:
    """Matched-period synthesis LMI for mode index ``k`` (0-based) in ``(X, Y, W, eps)``.

    Block orders are ``[n, n, n, n, p]``.
    """
    _check_alpha(alpha)
    check_valid(sys)
    m = sys.modes[k]
    n, p = sys.n, sys.p
    I = _eye(n)
    lam = delay_weights(alpha, sys.d_h, sys.d_v, sys.n1, sys.n2)
    terms = (
        Term(0, 0, "X", -alpha * I, I),
        Term(0, 2, "X", I, m.A.T),
        Term(0, 2, "W", I, m.B.T, transpose=True),
        Term(0, 3, "X", I, I),
        Term(0, 4, "X", I, m.E1.T),
        Term(0, 4, "W", I, m.E3.T, transpose=True),
        Term(1, 1, "Y", -lam, I),
        Term(1, 2, "Y", I, m.A_d.T),
        Term(1, 4, "Y", I, m.E2.T),
        Term(2, 2, "X", -I, I),
        Term(2, 2, "eps", m.H, m.H.T),
        Term(3, 3, "Y", -I, I),
        Term(4, 4, "eps", -_eye(p), _eye(p)),
    )
    name = f"matched[{k + 1}]"
    lmi = AffineLmi(name, (n, n, n, n, p), {}, terms)
    return LmiProblem(name, _synthesis_variables(sys, True), (lmi,))


def assemble_thm1_mismatched(
    sys: SwitchedRoesserSystem, k: int, l: int, K: np.ndarray, beta: float
) -> LmiProblem:
    """Mismatched-period LMI: plant mode ``l`` driven by controller gain ``K`` of mode ``k``.

    ``A^l + B^l K`` and ``E1^l + E3^l K`` are folded before assembly so the
    inequality is affine in ``(X, Y, eps)``.
    """
    _check_beta(beta)
    check_valid(sys)
    K = np.asarray(K, dtype=float)
    if K.shape != (sys.q, sys.n):
        raise ValueError(f"gain must be {sys.q}x{sys.n}, got {K.shape}")
    m = sys.modes[l]
    n, p = sys.n, sys.p
    I = _eye(n)
    lam = delay_weights(beta, sys.d_h, sys.d_v, sys.n1, sys.n2)
    a_cl = m.A + m.B @ K
    e_cl = m.E1 + m.E3 @ K
    terms = (
        Term(0, 0, "X", -beta * I, I),
        Term(0, 2, "X", I, a_cl.T),
        Term(0, 3, "X", I, I),
        Term(0, 4, "X", I, e_cl.T),
        Term(1, 1, "Y", -lam, I),
        Term(1, 2, "Y", I, m.A_d.T),
        Term(1, 4, "Y", I, m.E2.T),
        Term(2, 2, "X", -I, I),
        Term(2, 2, "eps", m.H, m.H.T),
        Term(3, 3, "Y", -I, I),
        Term(4, 4, "eps", -_eye(p), _eye(p)),
    )
    name = f"mismatched[{k + 1}->{l + 1}]"
    lmi = AffineLmi(name, (n, n, n, n, p), {}, terms)
    return LmiProblem(name, _synthesis_variables(sys, False), (lmi,))


def assemble_corollary1(
    sys: SwitchedRoesserSystem, k: int, rate: float, l: int | None = None, K=None
) -> LmiProblem:
    """Delay-free variant: the delay rows/columns of the theorem LMIs removed.

    With ``l`` and ``K`` given this is the mismatched form (``rate`` = beta),
    otherwise the matched form for mode ``k`` (``rate`` = alpha). Every
    ``A_d`` must be zero.
    """
    if any(np.any(m.A_d != 0) for m in sys.modes):
        raise ValueError("the delay-free conditions need A_d = 0 in every mode")
    if l is None:
        full = assemble_thm1_matched(sys, k, rate)
        name = f"corollary-matched[{k + 1}]"
    else:
        if K is None:
            raise ValueError("the mismatched form needs the gain K")
        full = assemble_thm1_mismatched(sys, k, l, K, rate)
        name = f"corollary-mismatched[{k + 1}->{l + 1}]"
    lmi = full.constraints[0].delete_blocks({1, 3}, name)
    variables = tuple(v for v in full.variables if v.name != "Y")
    return LmiProblem(name, variables, (lmi,))


def assemble_closedloop_analysis(A_cl, A_d, P, Q, rate: float, d_h: int, d_v: int, n1: int) -> np.ndarray:
    """Numeric analysis-form matrix ``[[Q - rate P, 0, A_cl' P], [*, -Lam Q, A_d' P], [*, *, -P]]``.

    ``A_cl`` is the realized closed loop ``A_hat + B_hat K``; ``Lam`` weights
    the delay blocks by ``rate**d``.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if not numerics.is_positive_definite(P) or not numerics.is_positive_definite(Q):
        raise numerics.NotPositiveDefinite("P and Q must be positive definite")
    prob = _lemma_form("analysis", A_cl, A_d, rate, d_h, d_v, n1)
    return prob.constraints[0].evaluate({"P": P, "Q": Q})


def schur_expand(A, A_d, P, Q, alpha: float, d_h: int, d_v: int, n1: int) -> np.ndarray:
    """Two-block form ``[[Q - aP + A'PA, A'PA_d], [*, A_d'PA_d - Lam Q]]``."""
    A = np.asarray(A, dtype=float)
    A_d = np.asarray(A_d, dtype=float)
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if not numerics.is_positive_definite(P):
        raise numerics.NotPositiveDefinite("P must be positive definite")
    n = A.shape[0]
    lam = delay_weights(alpha, d_h, d_v, n1, n - n1)
    phi11 = Q - alpha * P + A.T @ P @ A
    phi12 = A.T @ P @ A_d
    phi22 = A_d.T @ P @ A_d - numerics.symmetrize(lam @ Q)
    return numerics.symmetrize(np.block([[phi11, phi12], [phi12.T, phi22]]))


@dataclass(frozen=True)
class EliminationCheck:
    majorized: bool
    majorized_lambda_max: float
    sampled_all: bool
    worst_sampled_lambda_max: float
    n_samples: int


def random_contractions(r: int, p: int, count: int, seed: int = 0) -> list[np.ndarray]:
    """Random ``r x p`` matrices with spectral norm at most 1 (some exactly 1)."""
    rng = np.random.default_rng(seed)
    out = []
    for s in range(count):
        v = rng.standard_normal((r, p))
        norm = np.linalg.norm(v, 2)
        radius = 1.0 if s % 3 == 0 else rng.uniform(0.0, 1.0)
        out.append(v * (radius / norm) if norm > 0 else v)
    return out


def verify_lemma2_elimination(X0, U, W, epsilon: float, samples=1000, seed: int = 0) -> EliminationCheck:
    """Compare the majorized form ``X0 + eps U U' + W' W / eps`` with sampled uncertainty.

    ``samples`` is either a count of random admissible ``V`` or an explicit
    list. Whenever the majorized form is negative definite, every sampled
    ``X0 + U V W + (U V W)'`` must be as well; a violation raises
    AssertionError since it would contradict the elimination bound.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    X0 = numerics.symmetrize(X0)
    U = np.asarray(U, dtype=float)
    W = np.asarray(W, dtype=float)
    n = X0.shape[0]
    if U.shape[0] != n or W.shape[1] != n:
        raise ValueError("U must have n rows and W n columns")
    maj = X0 + epsilon * U @ U.T + (W.T @ W) / epsilon
    maj_top = numerics.lambda_max(maj)
    if isinstance(samples, int):
        vs = random_contractions(U.shape[1], W.shape[0], samples, seed)
    else:
        vs = [np.asarray(v, dtype=float) for v in samples]
    worst = -np.inf
    for v in vs:
        uvw = U @ v @ W
        worst = max(worst, numerics.lambda_max(X0 + uvw + uvw.T))
    sampled_all = bool(worst < 0) if vs else True
    majorized = bool(maj_top < 0)
    if majorized and not sampled_all:
        raise AssertionError(
            f"majorized form is negative definite ({maj_top:.3e}) but a sample gives {worst:.3e}"
        )
    return EliminationCheck(majorized, maj_top, sampled_all, float(worst), len(vs))
