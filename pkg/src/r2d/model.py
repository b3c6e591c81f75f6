"""Uncertain 2D switched Roesser systems with state delays.

A system is a list of modes sharing one set of dimensions. Each mode carries
the nominal matrices ``A, A_d, B`` and the norm-bounded uncertainty structure
``H, E1, E2, E3``; for an admissible ``F`` (``F.T @ F <= I``) the realized
matrices are ``A + H F E1``, ``A_d + H F E2`` and ``B + H F E3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .numerics import lambda_max

ADMISSIBLE_TOL = 1e-12
UNCERTAINTY_KINDS = ("zero", "scalar-sinusoid", "scalar-cosinusoid", "constant", "custom-table")


class InadmissibleUncertainty(ValueError):
    """``F`` violates ``F.T @ F <= I``."""


class InvalidSystem(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def _mat(x) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModeMatrices:
    A: np.ndarray
    A_d: np.ndarray
    B: np.ndarray
    H: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    E3: np.ndarray

    def __post_init__(self):
        for name in ("A", "A_d", "B", "H", "E1", "E2", "E3"):
            object.__setattr__(self, name, _mat(getattr(self, name)))

    @classmethod
    def nominal(cls, A, A_d, B) -> "ModeMatrices":
        """A mode without uncertainty (one-dimensional zero ``H``/``E`` factors)."""
        A, A_d, B = _mat(A), _mat(A_d), _mat(B)
        n, q = B.shape
        return cls(A, A_d, B, np.zeros((n, 1)), np.zeros((1, n)), np.zeros((1, n)), np.zeros((1, q)))


@dataclass(frozen=True)
class SwitchedRoesserSystem:
    n1: int
    n2: int
    d_h: int
    d_v: int
    modes: tuple[ModeMatrices, ...]
    delay_free: bool = False

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def q(self) -> int:
        return self.modes[0].B.shape[1] if self.modes else 0

    @property
    def r(self) -> int:
        return self.modes[0].H.shape[1] if self.modes else 0

    @property
    def p(self) -> int:
        return self.modes[0].E1.shape[0] if self.modes else 0

    @property
    def d_bar(self) -> int:
        return max(self.d_h, self.d_v)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def without_delay(self) -> "SwitchedRoesserSystem":
        """The delay-free system obtained by zeroing every ``A_d``."""
        modes = [
            ModeMatrices(m.A, np.zeros_like(m.A_d), m.B, m.H, m.E1, m.E2, m.E3) for m in self.modes
        ]
        return SwitchedRoesserSystem(self.n1, self.n2, 0, 0, modes, delay_free=True)


def validate(sys: SwitchedRoesserSystem) -> list[str]:
    """Every structural problem with ``sys``; an empty list means valid."""
    out: list[str] = []
    if sys.n1 < 1 or sys.n2 < 1:
        out.append(f"n1 and n2 must be >= 1 (got n1={sys.n1}, n2={sys.n2})")
    if sys.d_h < 0 or sys.d_v < 0:
        out.append(f"delays must be >= 0 (got d_h={sys.d_h}, d_v={sys.d_v})")
    elif not sys.delay_free and (sys.d_h == 0 or sys.d_v == 0):
        out.append("zero delay requires the delay_free flag")
    if max(sys.d_h, sys.d_v) > 64:
        out.append("delays above 64 grid steps are not supported")
    if not sys.modes:
        out.append("N >= 1 required: the mode list is empty")
        return out
    n = sys.n
    q = sys.modes[0].B.shape[1]
    r = sys.modes[0].H.shape[1]
    p = sys.modes[0].E1.shape[0]
    expected = {
        "A": (n, n),
        "A_d": (n, n),
        "B": (n, q),
        "H": (n, r),
        "E1": (p, n),
        "E2": (p, n),
        "E3": (p, q),
    }
    for k, mode in enumerate(sys.modes):
        for name, shape in expected.items():
            got = getattr(mode, name).shape
            if got != shape:
                out.append(f"mode {k + 1}: {name} has shape {got}, expected {shape}")
        if sys.delay_free and np.any(mode.A_d != 0):
            out.append(f"mode {k + 1}: A_d must be zero for a delay-free system")
    return out


def check_valid(sys: SwitchedRoesserSystem) -> SwitchedRoesserSystem:
    violations = validate(sys)
    if violations:
        raise InvalidSystem(violations)
    return sys


def check_admissible(F: np.ndarray) -> None:
    F = np.asarray(F, dtype=float)
    if F.size == 0:
        return
    top = lambda_max(F.T @ F)
    if top > 1.0 + ADMISSIBLE_TOL:
        raise InadmissibleUncertainty(f"lambda_max(F'F) = {top:.6g} exceeds 1")


def realize_uncertain_matrices(sys: SwitchedRoesserSystem, k: int, F: np.ndarray):
    """``(A + H F E1, A_d + H F E2, B + H F E3)`` for mode index ``k`` (0-based)."""
    mode = sys.modes[k]
    F = np.asarray(F, dtype=float)
    if F.shape != (mode.H.shape[1], mode.E1.shape[0]):
        raise ValueError(f"F must be {mode.H.shape[1]}x{mode.E1.shape[0]}, got {F.shape}")
    check_admissible(F)
    if not F.any():
        return np.array(mode.A), np.array(mode.A_d), np.array(mode.B)
    HF = mode.H @ F
    return mode.A + HF @ mode.E1, mode.A_d + HF @ mode.E2, mode.B + HF @ mode.E3


@dataclass(frozen=True)
class UncertaintyRealization:
    """A deterministic choice of ``F(i, j)``.

    ``scalar-sinusoid`` gives ``amplitude * sin(frequency * (i + j) + phase)``
    times the rectangular identity; ``scalar-cosinusoid`` likewise with cos.
    ``custom-table`` maps ``(i, j)`` to a matrix and defaults to zero.
    """

    kind: str = "zero"
    shape: tuple[int, int] = (1, 1)
    amplitude: float = 1.0
    frequency: float = 0.5 * math.pi
    phase: float = 0.0
    matrix: np.ndarray | None = None
    table: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in UNCERTAINTY_KINDS:
            raise ValueError(f"unknown uncertainty kind {self.kind!r}")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if self.kind in ("scalar-sinusoid", "scalar-cosinusoid") and abs(self.amplitude) > 1:
            raise InadmissibleUncertainty("amplitude must be at most 1")
        if self.kind == "constant":
            if self.matrix is None:
                raise ValueError("constant uncertainty needs a matrix")
            m = _mat(self.matrix)
            if m.shape != self.shape:
                raise ValueError(f"matrix shape {m.shape} does not match {self.shape}")
            check_admissible(m)
            object.__setattr__(self, "matrix", m)
        if self.kind == "custom-table":
            table = {}
            for key, val in dict(self.table).items():
                m = _mat(val)
                if m.shape != self.shape:
                    raise ValueError(f"table entry {key} has shape {m.shape}, expected {self.shape}")
                check_admissible(m)
                table[(int(key[0]), int(key[1]))] = m
            object.__setattr__(self, "table", table)


def eval_uncertainty(u: UncertaintyRealization, i: int, j: int) -> np.ndarray:
    r, p = u.shape
    if u.kind == "zero":
        return np.zeros((r, p))
    if u.kind == "scalar-sinusoid":
        return u.amplitude * math.sin(u.frequency * (i + j) + u.phase) * np.eye(r, p)
    if u.kind == "scalar-cosinusoid":
        return u.amplitude * math.cos(u.frequency * (i + j) + u.phase) * np.eye(r, p)
    if u.kind == "constant":
        return np.array(u.matrix)
    entry = u.table.get((i, j))
    return np.zeros((r, p)) if entry is None else np.array(entry)


@dataclass(frozen=True)
class BoundaryConditions:
    """Sparse boundary values; anything not stored is zero.

    ``h_values[(i, j)]`` for ``-d_h <= i <= 0, 0 <= j <= z1`` and
    ``v_values[(i, j)]`` for ``0 <= i <= z2, -d_v <= j <= 0``.
    """

    z1: int
    z2: int
    h_values: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)
    v_values: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.z1 < 0 or self.z2 < 0:
            raise ValueError("z1 and z2 must be nonnegative")
        h = {}
        for (i, j), val in dict(self.h_values).items():
            if i > 0 or not 0 <= j <= self.z1:
                raise ValueError(f"horizontal boundary key {(i, j)} outside i <= 0, 0 <= j <= z1")
            h[(int(i), int(j))] = np.asarray(val, dtype=float).reshape(-1)
        v = {}
        for (i, j), val in dict(self.v_values).items():
            if j > 0 or not 0 <= i <= self.z2:
                raise ValueError(f"vertical boundary key {(i, j)} outside j <= 0, 0 <= i <= z2")
            v[(int(i), int(j))] = np.asarray(val, dtype=float).reshape(-1)
        object.__setattr__(self, "h_values", h)
        object.__setattr__(self, "v_values", v)

    def horizontal(self, i: int, j: int, n1: int) -> np.ndarray:
        val = self.h_values.get((i, j))
        return np.zeros(n1) if val is None else val.copy()

    def vertical(self, i: int, j: int, n2: int) -> np.ndarray:
        val = self.v_values.get((i, j))
        return np.zeros(n2) if val is None else val.copy()

    @classmethod
    def constant(cls, d_h: int, d_v: int, z1: int, z2: int, h, v) -> "BoundaryConditions":
        """Constant values over the whole delay strips up to ``z1``/``z2``."""
        h = np.atleast_1d(np.asarray(h, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        hv = {(i, j): h for i in range(-d_h, 1) for j in range(z1 + 1)}
        vv = {(i, j): v for i in range(z2 + 1) for j in range(-d_v, 1)}
        return cls(z1, z2, hv, vv)

    def check_dims(self, sys: SwitchedRoesserSystem) -> list[str]:
        out = []
        for key, val in self.h_values.items():
            if val.shape != (sys.n1,):
                out.append(f"h_values{key} has length {val.size}, expected {sys.n1}")
            if key[0] < -sys.d_h:
                out.append(f"h_values{key} lies beyond the horizontal delay strip")
        for key, val in self.v_values.items():
            if val.shape != (sys.n2,):
                out.append(f"v_values{key} has length {val.size}, expected {sys.n2}")
            if key[1] < -sys.d_v:
                out.append(f"v_values{key} lies beyond the vertical delay strip")
        return out
