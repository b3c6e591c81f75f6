"""Built-in example systems.

``sec4`` is the two-mode delayed example with n1 = n2 = 1 (whole-state
matrices are 2x2), d_h = 2, d_v = 3, and boundary values 10 (horizontal) and
6 (vertical) up to index 20. ``SEC4_SOLUTION`` holds reference solution
matrices (rounded to four decimals), used for validation only.
"""

from __future__ import annotations

import math

import numpy as np

from .model import BoundaryConditions, ModeMatrices, SwitchedRoesserSystem, UncertaintyRealization


def sec4_system() -> SwitchedRoesserSystem:
    mode1 = ModeMatrices(
        A=[[1.0, 1.5], [1.0, 0.5]],
        A_d=[[-0.15, 0.0], [-0.1, -0.12]],
        B=[[-4.5, 0.0], [1.0, -3.0]],
        H=[[0.2, 0.15], [0.1, 0.2]],
        E1=[[0.1, 0.15], [0.1, 0.0]],
        E2=[[0.1, 0.0], [0.1, 0.2]],
        E3=[[0.15, 0.0], [0.13, 0.12]],
    )
    mode2 = ModeMatrices(
        A=[[1.0, 2.0], [1.0, 1.0]],
        A_d=[[-0.1, 0.2], [0.0, -0.2]],
        B=[[-5.0, 1.0], [-1.0, -3.0]],
        H=[[0.2, 0.25], [0.2, 0.3]],
        E1=[[0.1, 0.2], [0.2, 0.1]],
        E2=[[0.2, 0.1], [0.2, 0.1]],
        E3=[[0.12, 0.15], [0.12, 0.1]],
    )
    return SwitchedRoesserSystem(n1=1, n2=1, d_h=2, d_v=3, modes=(mode1, mode2))


def sec4_boundary() -> BoundaryConditions:
    return BoundaryConditions.constant(d_h=2, d_v=3, z1=20, z2=20, h=[10.0], v=[6.0])


def sec4_uncertainty() -> tuple[UncertaintyRealization, ...]:
    return (
        UncertaintyRealization("scalar-sinusoid", (2, 2), 1.0, 0.5 * math.pi),
        UncertaintyRealization("scalar-cosinusoid", (2, 2), 1.0, 0.5 * math.pi),
    )


SEC4_RUN = {
    "alpha": 0.6,
    "beta": 1.2,
    "seed": 0,
    "ratio": 8.0,
    "lambda_star": None,
    "N0": 1,
    "tau_a": 6.5,
    "lag": 2,
    "horizon": 60,
}


def _m(rows):
    return np.array(rows, dtype=float)


SEC4_SOLUTION = {
    "X": {1: _m([[0.4300, 0.0080], [0.0080, 0.4365]]), 2: _m([[0.4180, -0.0451], [-0.0451, 0.3841]])},
    "Y": {1: _m([[1.0619, -0.0738], [-0.0738, 1.0681]]), 2: _m([[1.0295, -0.0395], [-0.0395, 0.8684]])},
    "W": {1: _m([[0.0991, 0.1475], [0.1789, 0.1255]]), 2: _m([[0.0840, 0.1560], [0.0944, 0.0590]])},
    "eps": {1: 0.7882, 2: 0.9010},
    "K": {1: _m([[0.2243, 0.3338], [0.4107, 0.2800]]), 2: _m([[0.2481, 0.4354], [0.2454, 0.1823]])},
    "Xkl": {
        (1, 2): _m([[0.6059, -0.1005], [-0.1005, 0.5325]]),
        (2, 1): _m([[0.5805, -0.0926], [-0.0926, 0.5677]]),
    },
    "Ykl": {
        (1, 2): _m([[1.0435, -0.0451], [-0.0451, 0.9365]]),
        (2, 1): _m([[1.0422, -0.0447], [-0.0447, 0.9670]]),
    },
    "epskl": {(1, 2): 0.9987, (2, 1): 1.0404},
    "mu1": 1.5694,
    "mu2": 9.1561,
    "lambda_star": 0.4338,
    "tau_a_star": 6.15,
}

FIXTURES = {"sec4": (sec4_system, sec4_boundary, sec4_uncertainty, SEC4_RUN)}


def sec4_reference_certificate(ratio: float = 8.0):
    """Certificate built from the reference matrices (gains as listed)."""
    from .synthesis import MatchedSolution, MismatchedSolution, assemble_certificate

    s = SEC4_SOLUTION
    matched = [
        MatchedSolution(k - 1, s["X"][k], s["Y"][k], s["W"][k], s["eps"][k], s["K"][k]) for k in (1, 2)
    ]
    mismatched = {
        (k - 1, l - 1): MismatchedSolution(k - 1, l - 1, s["Xkl"][(k, l)], s["Ykl"][(k, l)], s["epskl"][(k, l)])
        for (k, l) in ((1, 2), (2, 1))
    }
    return assemble_certificate(sec4_system(), 0.6, 1.2, matched, mismatched, ratio=ratio)
