"""JSON documents (system, run config, certificate) and CSV export.

Matrices are nested row-major lists. Floats are written with Python's
shortest round-trip representation, so parsing reproduces every value
bit for bit. Modes are numbered from 1 in every document.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .model import (
    BoundaryConditions,
    ModeMatrices,
    SwitchedRoesserSystem,
    UncertaintyRealization,
    validate,
)
from .synthesis import MatchedSolution, MismatchedSolution, SynthesisCertificate

MATRIX_FIELDS = ("A", "A_d", "B", "H", "E1", "E2", "E3")


class DocumentError(ValueError):
    """A document could not be parsed; ``where`` names the offending field."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def _plain(x: Any) -> Any:
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (np.floating, float)):
        f = float(x)
        if not math.isfinite(f):
            return None if math.isnan(f) else ("inf" if f > 0 else "-inf")
        return f
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(obj: Any) -> str:
    return json.dumps(_plain(obj), indent=2) + "\n"


def _get(doc: dict, key: str, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise DocumentError(f"{where}.{key}" if where else key, "missing field")
    return doc[key]


def _matrix(value, where: str) -> np.ndarray:
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DocumentError(where, f"not a numeric matrix ({exc})") from None
    if a.ndim != 2:
        raise DocumentError(where, f"expected a 2-D row-major array, got {a.ndim}-D")
    return a


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise DocumentError(where, f"expected an integer, got {value!r}")
    return value


def _float(value, where: str) -> float:
    if value == "inf":
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DocumentError(where, f"expected a number, got {value!r}")
    return float(value)


@dataclass
class SystemDocument:
    system: SwitchedRoesserSystem
    boundary: BoundaryConditions
    uncertainty: tuple[UncertaintyRealization, ...]


def system_to_dict(doc: SystemDocument) -> dict:
    sys = doc.system
    modes = [{name: getattr(m, name) for name in MATRIX_FIELDS} for m in sys.modes]
    b = doc.boundary
    h_values = [{"i": i, "j": j, "value": v} for (i, j), v in sorted(b.h_values.items(), key=lambda kv: (kv[0][1], kv[0][0]))]
    v_values = [{"i": i, "j": j, "value": v} for (i, j), v in sorted(b.v_values.items())]
    unc = []
    for u in doc.uncertainty:
        entry: dict[str, Any] = {"kind": u.kind, "shape": list(u.shape)}
        if u.kind in ("scalar-sinusoid", "scalar-cosinusoid"):
            entry.update(amplitude=u.amplitude, frequency=u.frequency, phase=u.phase)
        elif u.kind == "constant":
            entry["matrix"] = u.matrix
        elif u.kind == "custom-table":
            entry["table"] = [{"i": i, "j": j, "matrix": m} for (i, j), m in sorted(u.table.items())]
        unc.append(entry)
    return {
        "dims": {"n1": sys.n1, "n2": sys.n2, "q": sys.q, "p": sys.p, "r": sys.r},
        "delays": {"d_h": sys.d_h, "d_v": sys.d_v},
        "delay_free": sys.delay_free,
        "modes": modes,
        "boundary": {"z1": b.z1, "z2": b.z2, "h_values": h_values, "v_values": v_values},
        "uncertainty": unc,
    }


def system_from_dict(d: dict) -> SystemDocument:
    dims = _get(d, "dims", "")
    n1 = _int(_get(dims, "n1", "dims"), "dims.n1")
    n2 = _int(_get(dims, "n2", "dims"), "dims.n2")
    delays = _get(d, "delays", "")
    d_h = _int(_get(delays, "d_h", "delays"), "delays.d_h")
    d_v = _int(_get(delays, "d_v", "delays"), "delays.d_v")
    raw_modes = _get(d, "modes", "")
    if not isinstance(raw_modes, list):
        raise DocumentError("modes", "expected a list")
    modes = []
    for k, m in enumerate(raw_modes):
        where = f"modes[{k}]"
        mats = {name: _matrix(_get(m, name, where), f"{where}.{name}") for name in MATRIX_FIELDS}
        modes.append(ModeMatrices(**mats))
    sys = SwitchedRoesserSystem(n1, n2, d_h, d_v, tuple(modes), bool(d.get("delay_free", False)))
    violations = validate(sys)
    if violations:
        raise DocumentError("modes", "; ".join(violations))
    for key in ("q", "p", "r"):
        if key in dims and _int(dims[key], f"dims.{key}") != getattr(sys, key):
            raise DocumentError(f"dims.{key}", f"declared {dims[key]} but matrices imply {getattr(sys, key)}")

    braw = _get(d, "boundary", "")
    z1 = _int(_get(braw, "z1", "boundary"), "boundary.z1")
    z2 = _int(_get(braw, "z2", "boundary"), "boundary.z2")

    def entries(key):
        out = {}
        for idx, e in enumerate(braw.get(key, [])):
            where = f"boundary.{key}[{idx}]"
            i = _int(_get(e, "i", where), f"{where}.i")
            j = _int(_get(e, "j", where), f"{where}.j")
            out[(i, j)] = np.array(_get(e, "value", where), dtype=float)
        return out

    try:
        boundary = BoundaryConditions(z1, z2, entries("h_values"), entries("v_values"))
    except ValueError as exc:
        raise DocumentError("boundary", str(exc)) from None
    problems = boundary.check_dims(sys)
    if problems:
        raise DocumentError("boundary", "; ".join(problems))

    raw_unc = d.get("uncertainty")
    if raw_unc is None:
        unc = tuple(UncertaintyRealization("zero", (sys.r, sys.p)) for _ in modes)
    else:
        if not isinstance(raw_unc, list) or len(raw_unc) != len(modes):
            raise DocumentError("uncertainty", "expected one descriptor per mode")
        items = []
        for k, u in enumerate(raw_unc):
            where = f"uncertainty[{k}]"
            kind = _get(u, "kind", where)
            shape = tuple(u.get("shape", (sys.r, sys.p)))
            if shape != (sys.r, sys.p):
                raise DocumentError(f"{where}.shape", f"expected {[sys.r, sys.p]}")
            kwargs: dict[str, Any] = {}
            for key in ("amplitude", "frequency", "phase"):
                if key in u:
                    kwargs[key] = _float(u[key], f"{where}.{key}")
            if "matrix" in u:
                kwargs["matrix"] = _matrix(u["matrix"], f"{where}.matrix")
            if "table" in u:
                kwargs["table"] = {
                    (_int(e["i"], f"{where}.table.i"), _int(e["j"], f"{where}.table.j")): _matrix(
                        e["matrix"], f"{where}.table.matrix"
                    )
                    for e in u["table"]
                }
            try:
                items.append(UncertaintyRealization(kind, shape, **kwargs))
            except ValueError as exc:
                raise DocumentError(where, str(exc)) from None
        unc = tuple(items)
    return SystemDocument(sys, boundary, unc)


def parse_json(text: str, source: str = "<document>") -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{source}:{exc.lineno}:{exc.colno}", exc.msg) from None


def load_system(path: str | Path) -> SystemDocument:
    path = Path(path)
    return system_from_dict(parse_json(path.read_text(), str(path)))


def dump_system(doc: SystemDocument) -> str:
    return dumps(system_to_dict(doc))


# Run configuration


@dataclass
class RunConfig:
    alpha: float = 0.6
    beta: float = 1.2
    seed: int = 0
    ratio: float | None = 8.0
    lambda_star: float | None = None
    N0: float = 1.0
    tau_a: float = 6.5
    lag: int | list[int] = 2
    horizon: int = 60
    instants: list[int] | None = None
    modes: list[int] | None = None

    def check(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise DocumentError("alpha", f"must lie in (0, 1), got {self.alpha}")
        if not self.beta > 1.0:
            raise DocumentError("beta", f"must exceed 1, got {self.beta}")
        if self.horizon < 1:
            raise DocumentError("horizon", "must be at least 1")
        if self.ratio is not None and self.lambda_star is not None:
            raise DocumentError("ratio", "give either ratio or lambda_star, not both")
        if self.ratio is None and self.lambda_star is None:
            raise DocumentError("ratio", "give ratio or lambda_star")
        if not self.tau_a > 0:
            raise DocumentError("tau_a", "must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise DocumentError(sorted(unknown)[0], "unknown run-config field")
        cfg = cls(**d)
        cfg.check()
        return cfg


# Certificates


def certificate_to_dict(cert: SynthesisCertificate) -> dict:
    return {
        "alpha": cert.alpha,
        "beta": cert.beta,
        "d_h": cert.d_h,
        "d_v": cert.d_v,
        "d_bar": cert.d_bar,
        "seed": cert.seed,
        "gains": [m.K for m in cert.matched],
        "matched": [
            {"mode": m.mode + 1, "X": m.X, "Y": m.Y, "W": m.W, "eps": m.eps, "margin": m.margin}
            for m in cert.matched
        ],
        "mismatched": [
            {"k": s.k + 1, "l": s.l + 1, "X": s.X, "Y": s.Y, "eps": s.eps, "margin": s.margin}
            for _, s in sorted(cert.mismatched.items())
        ],
        "mu1": cert.mu1,
        "mu2": cert.mu2,
        "mu": cert.mu,
        "mu_floor_applied": cert.mu_floor_applied,
        "lambda_minus": cert.lambda_minus,
        "lambda_plus": cert.lambda_plus,
        "lambda_star": cert.lambda_star,
        "tau_a_star": cert.tau_a_star,
        "required_ratio": cert.required_ratio,
        "zeta1": cert.zeta1,
        "zeta2": cert.zeta2,
    }


def certificate_from_dict(d: dict) -> SynthesisCertificate:
    def f(key):
        return _float(_get(d, key, "certificate"), key)

    matched = []
    for idx, m in enumerate(_get(d, "matched", "certificate")):
        where = f"matched[{idx}]"
        X = _matrix(_get(m, "X", where), f"{where}.X")
        W = _matrix(_get(m, "W", where), f"{where}.W")
        gains = d.get("gains")
        K = _matrix(gains[idx], f"gains[{idx}]") if gains else W @ np.linalg.inv(X)
        matched.append(
            MatchedSolution(
                _int(_get(m, "mode", where), f"{where}.mode") - 1,
                X,
                _matrix(_get(m, "Y", where), f"{where}.Y"),
                W,
                _float(_get(m, "eps", where), f"{where}.eps"),
                K,
                _float(m.get("margin") if m.get("margin") is not None else math.nan, f"{where}.margin"),
            )
        )
    mismatched = {}
    for idx, s in enumerate(_get(d, "mismatched", "certificate")):
        where = f"mismatched[{idx}]"
        k = _int(_get(s, "k", where), f"{where}.k") - 1
        l = _int(_get(s, "l", where), f"{where}.l") - 1
        mismatched[(k, l)] = MismatchedSolution(
            k,
            l,
            _matrix(_get(s, "X", where), f"{where}.X"),
            _matrix(_get(s, "Y", where), f"{where}.Y"),
            _float(_get(s, "eps", where), f"{where}.eps"),
            _float(s.get("margin") if s.get("margin") is not None else math.nan, f"{where}.margin"),
        )
    return SynthesisCertificate(
        alpha=f("alpha"),
        beta=f("beta"),
        d_h=_int(_get(d, "d_h", "certificate"), "d_h"),
        d_v=_int(_get(d, "d_v", "certificate"), "d_v"),
        matched=matched,
        mismatched=mismatched,
        mu1=f("mu1"),
        mu2=f("mu2"),
        mu=f("mu"),
        mu_floor_applied=bool(d.get("mu_floor_applied", False)),
        lambda_star=f("lambda_star"),
        tau_a_star=f("tau_a_star"),
        required_ratio=f("required_ratio"),
        zeta1=f("zeta1"),
        zeta2=f("zeta2"),
        seed=int(d.get("seed", 0)),
    )


def load_certificate(path: str | Path) -> SynthesisCertificate:
    path = Path(path)
    return certificate_from_dict(parse_json(path.read_text(), str(path)))


# CSV


def _fmt(x: float) -> str:
    return repr(float(x))


def trajectory_csv(grid, V=None) -> str:
    """One row per cell ``i + j <= horizon``; ``V`` is blank without a certificate."""
    buf = io.StringIO()
    header = ["i", "j", "D"]
    header += [f"x_h{c + 1}" for c in range(grid.n1)]
    header += [f"x_v{c + 1}" for c in range(grid.n2)]
    header += ["mode_sys", "mode_ctrl", "V"]
    buf.write(",".join(header) + "\n")
    for D in range(grid.horizon + 1):
        for i, j in grid.cells(D):
            row = [str(i), str(j), str(D)]
            row += [_fmt(x) for x in grid.h(i, j)]
            row += [_fmt(x) for x in grid.v(i, j)]
            row += [str(int(grid.mode_sys[D]) + 1), str(int(grid.mode_ctrl[D]) + 1)]
            row.append("" if V is None else _fmt(V[i, j]))
            buf.write(",".join(row) + "\n")
    return buf.getvalue()


def diagonal_csv(energy, V_sums, plan) -> str:
    buf = io.StringIO()
    buf.write("D,energy,V_sum,T_plus_cum,T_minus_cum\n")
    for D in range(len(energy)):
        v = "" if V_sums is None else _fmt(V_sums[D])
        buf.write(f"{D},{_fmt(energy[D])},{v},{plan.T_plus(0, D)},{plan.T_minus(0, D)}\n")
    return buf.getvalue()


GNUPLOT_SCRIPT = """\
# diagonal energy (log scale) from diagonals.csv
set datafile separator ','
set logscale y
set xlabel 'D = i + j'
set ylabel 'sum of squared state norms'
plot 'diagonals.csv' using 1:2 skip 1 with linespoints title 'energy'
"""
