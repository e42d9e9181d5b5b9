"""Declarative scenario files (TOML) and their evaluation into sweep records."""
from __future__ import annotations

import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .discontinuity import DEFAULT_NU_SCHEDULE, jump, regularization_limit, unit_direction
from .errors import DomainError, NumericalError, ParseError, UnknownFamily, ValidationError
from .families import FiniteDifferenceConfig, StateFamily, builtin_family, evaluate_bundle
from .hermitian import TOL_ZERO
from .metrology import (bures_distance_sq, continuous_qfi, cramer_rao_lower_bound,
                        kernel_hessian_sum, qfi_spectral, root_fidelity, sld, truncated_metric)

QUANTITIES = ("H", "Hc", "truncated", "sld", "hessian_sum", "jump", "crb", "fidelity_curve",
              "regularization")
MAX_GRID_POINTS = 10**6


# --- tabulated families -----------------------------------------------------------

def _three_point_weights(x0, x1, x2, at):
    """First- and second-derivative weights at ``at`` from nodes ``x0, x1, x2``."""
    xs = (x0, x1, x2)
    w1, w2 = [], []
    for k in range(3):
        a, b = [xs[m] for m in range(3) if m != k]
        den = (xs[k] - a) * (xs[k] - b)
        w1.append(((at - a) + (at - b)) / den)
        w2.append(2.0 / den)
    return np.array(w1), np.array(w2)


def tabulated_family(name: str, axis, matrices, tol: float = 1e-12) -> StateFamily:
    """One-parameter family known only on grid nodes.

    Derivatives come from three-point differences on the (possibly non-uniform)
    grid; evaluating between nodes raises :class:`DomainError`.
    """
    xs = np.asarray(axis, dtype=float)
    mats = np.asarray(matrices, dtype=complex)
    if xs.ndim != 1 or len(xs) < 3:
        raise ValidationError("a tabulated family needs at least three axis nodes")
    if np.any(np.diff(xs) <= 0):
        raise ValidationError("tabulated axis must be strictly increasing")
    if mats.ndim != 3 or mats.shape[0] != len(xs) or mats.shape[1] != mats.shape[2]:
        raise ValidationError("tabulated matrices must have shape (nodes, dim, dim)")

    def node(q):
        k = int(np.argmin(np.abs(xs - q[0])))
        if abs(xs[k] - q[0]) > tol * max(1.0, abs(q[0])):
            raise DomainError(f"{name} is only defined on its grid nodes (got {q[0]!r})")
        return k

    def stencil(k):
        lo = min(max(k - 1, 0), len(xs) - 3)
        return lo, _three_point_weights(*xs[lo:lo + 3], xs[k])

    def rho(q):
        return mats[node(q)]

    def d1(q):
        k = node(q)
        lo, (w1, _) = stencil(k)
        return np.einsum("m,mxy->xy", w1, mats[lo:lo + 3])[None]

    def d2(q):
        k = node(q)
        lo, (_, w2) = stencil(k)
        return np.einsum("m,mxy->xy", w2, mats[lo:lo + 3])[None, None]

    return StateFamily(name=name, dim=mats.shape[1], n_params=1, rho=rho, d1=d1, d2=d2,
                       domain=((float(xs[0]), float(xs[-1])),),
                       default_range=((float(xs[0]), float(xs[-1])),),
                       description="tabulated on grid nodes",
                       derivative_provenance="grid-difference")


# --- scenario model --------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    family: StateFamily
    points: list
    quantities: tuple
    fd: FiniteDifferenceConfig = field(default_factory=FiniteDifferenceConfig)
    tol_zero: float = TOL_ZERO
    jump_direction: Optional[np.ndarray] = None
    regularization_schedule: tuple = DEFAULT_NU_SCHEDULE
    fidelity_step: float = 1e-2
    fidelity_direction: Optional[np.ndarray] = None
    name: str = "scenario"


def _line_of(text: str, key: str) -> Optional[int]:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Reader:
    """Typed access to a parsed TOML table that reports the offending field."""

    def __init__(self, table: dict, prefix: str, text: str):
        self.table, self.prefix, self.text = table, prefix, text

    def _path(self, key):
        return f"{self.prefix}.{key}" if self.prefix else key

    def _err(self, key, msg):
        return ParseError(msg, line=_line_of(self.text, key), field=self._path(key))

    def get(self, key, kind, default=None, required=False):
        if key not in self.table:
            if required:
                raise self._err(key, "missing required field")
            return default
        val = self.table[key]
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if kind == "floats":
            if not isinstance(val, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
                raise self._err(key, "expected a list of numbers")
            return [float(v) for v in val]
        if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
            raise self._err(key, f"expected {getattr(kind, '__name__', kind)}")
        return val

    def sub(self, key) -> "_Reader":
        return _Reader(self.get(key, dict, {}), self._path(key), self.text)

    def unknown(self, allowed):
        extra = sorted(set(self.table) - set(allowed))
        if extra:
            raise self._err(extra[0], "unknown field")


def _family(r: _Reader) -> StateFamily:
    r.unknown({"name", "bindings", "axis", "re", "im"})
    if "axis" in r.table:
        name = r.get("name", str, "tabulated")
        axis = r.get("axis", "floats", required=True)
        re_part = np.asarray(r.get("re", list, required=True), dtype=float)
        im = r.get("im", list)
        mats = re_part + 1j * np.asarray(im, dtype=float) if im is not None else re_part
        return tabulated_family(name, axis, mats)
    name = r.get("name", str, required=True)
    bindings = r.get("bindings", dict, {})
    try:
        return builtin_family(name, **bindings)
    except UnknownFamily as exc:
        raise ValidationError(str(exc)) from exc


def _linspace(start, stop, count, where):
    if count < 2:
        raise ValidationError(f"{where}: sweep count must be at least 2, got {count}")
    return np.linspace(start, stop, count)


def _points(r: _Reader, fam: StateFamily) -> list:
    kind = r.get("kind", str, required=True)
    n = fam.n_params
    if kind == "point":
        r.unknown({"kind", "at"})
        at = r.get("at", "floats", required=True)
        if len(at) != n:
            raise ValidationError(f"probe.at has {len(at)} coordinates, family needs {n}")
        return [np.array(at)]
    if kind == "sweep":
        r.unknown({"kind", "axis", "start", "stop", "count", "base"})
        axis = r.get("axis", int, 0)
        if not 0 <= axis < n:
            raise ValidationError(f"probe.axis {axis} out of range for {n} parameters")
        base = np.array(r.get("base", "floats", [0.0] * n))
        if len(base) != n:
            raise ValidationError(f"probe.base has {len(base)} coordinates, family needs {n}")
        ts = _linspace(r.get("start", float, required=True), r.get("stop", float, required=True),
                       r.get("count", int, required=True), "probe")
        pts = []
        for t in ts:
            q = base.copy()
            q[axis] = t
            pts.append(q)
        return pts
    if kind == "grid":
        r.unknown({"kind", "axes"})
        axes = r.get("axes", list, required=True)
        if len(axes) != n:
            raise ValidationError(f"probe.axes has {len(axes)} entries, family needs {n}")
        total = 1
        grids = []
        for k, ax in enumerate(axes):
            if not (isinstance(ax, list) and len(ax) == 3):
                raise ParseError("each grid axis is [start, stop, count]",
                                 line=_line_of(r.text, "axes"), field=f"probe.axes[{k}]")
            start, stop, count = ax
            if not isinstance(count, int):
                raise ParseError("grid count must be an integer", field=f"probe.axes[{k}]")
            total *= max(count, 0)
            if total > MAX_GRID_POINTS:
                raise ValidationError(f"grid exceeds {MAX_GRID_POINTS} points")
            grids.append(_linspace(float(start), float(stop), count, f"probe.axes[{k}]"))
        return [np.array(q) for q in product(*grids)]
    raise ParseError(f"unknown probe kind {kind!r}", line=_line_of(r.text, "kind"),
                     field="probe.kind")


def _direction(vals, n, where):
    if len(vals) != n:
        raise ValidationError(f"{where} has {len(vals)} components, family needs {n}")
    try:
        return unit_direction(vals, n)
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    """Parse and validate scenario text."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"malformed scenario: {exc}", line=getattr(exc, "lineno", None)) from exc
    root = _Reader(doc, "", text)
    root.unknown({"family", "probe", "quantities", "fd", "tolerances"})
    fam = _family(root.sub("family"))
    pts = _points(root.sub("probe"), fam)
    for q_ in pts:
        if not fam.in_domain(q_):
            raise ValidationError(f"probe point {q_.tolist()} is outside the domain of {fam.name}")

    q = root.sub("quantities")
    q.unknown({"names", "jump", "regularization", "fidelity_curve"})
    names = q.get("names", list, required=True)
    if not names:
        raise ValidationError("quantities.names is empty")
    for nm in names:
        if nm not in QUANTITIES:
            raise ValidationError(f"unknown quantity {nm!r}; known: {', '.join(QUANTITIES)}")
    n = fam.n_params
    jdir = None
    if "jump" in names:
        jr = q.sub("jump")
        jr.unknown({"direction"})
        jdir = _direction(jr.get("direction", "floats", required=True), n,
                          "quantities.jump.direction")
    sched = DEFAULT_NU_SCHEDULE
    if "regularization" in names:
        rr = q.sub("regularization")
        rr.unknown({"schedule"})
        sched = tuple(rr.get("schedule", "floats", list(DEFAULT_NU_SCHEDULE)))
        if len(sched) < 2 or any(not 0 < v < 1 for v in sched) or any(
                b >= a for a, b in zip(sched, sched[1:])):
            raise ValidationError("regularization schedule must be >= 2 decreasing values in (0, 1)")
    fr = q.sub("fidelity_curve")
    fr.unknown({"step", "direction"})
    fstep = fr.get("step", float, 1e-2)
    if not fstep > 0:
        raise ValidationError("quantities.fidelity_curve.step must be positive")
    fdir = _direction(fr.get("direction", "floats", [1.0] + [0.0] * (n - 1)), n,
                      "quantities.fidelity_curve.direction")

    fr_ = root.sub("fd")
    fr_.unknown({"h", "scheme", "richardson_levels"})
    try:
        fd = FiniteDifferenceConfig(fr_.get("h", float, 1e-4), fr_.get("scheme", str, "central"),
                                    fr_.get("richardson_levels", int, 2))
    except ValueError as exc:
        raise ValidationError(f"fd: {exc}") from exc
    tr = root.sub("tolerances")
    tr.unknown({"tol_zero"})
    tol_zero = tr.get("tol_zero", float, TOL_ZERO)
    if not 0 < tol_zero < 1e-3:
        raise ValidationError("tolerances.tol_zero must lie in (0, 1e-3)")

    return Scenario(fam, pts, tuple(names), fd, tol_zero, jdir, sched, fstep, fdir, name)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, name=path.stem)


# --- evaluation ----------------------------------------------------------------

def _pairs(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def columns(sc: Scenario) -> list[str]:
    """Output column names; identical for every row of a run."""
    n, d = sc.family.n_params, sc.family.dim
    cols = [f"p_{i}" for i in range(n)] + ["rank", "status"]

    def sym(name):
        return [f"{name}_{i}_{j}" for i, j in _pairs(n)]

    for q in sc.quantities:
        if q == "H":
            cols += sym("H")
        elif q == "Hc":
            cols += sym("Hc")
        elif q == "truncated":
            cols += sym("truncated")
        elif q == "hessian_sum":
            cols += sym("hessian_sum")
        elif q == "sld":
            for m in range(n):
                for k, l in _pairs(d):
                    cols += [f"sld{m}_{k}_{l}_re", f"sld{m}_{k}_{l}_im"]
        elif q == "jump":
            cols += sym("jump") + ["jump_excluded"]
        elif q == "crb":
            cols += sym("crb") + ["crb_singular"]
        elif q == "fidelity_curve":
            cols += ["fidelity", "bures_distance_sq"]
        elif q == "regularization":
            for k in range(len(sc.regularization_schedule)):
                cols += sym(f"reg_{k}")
            cols += sym("reg_limit") + ["reg_rel_change"]
    return cols


def _sym_values(m):
    m = np.asarray(m)
    return [float(m[i, j]) for i, j in _pairs(m.shape[0])]


def evaluate_point(sc: Scenario, p) -> dict:
    """One record; a numerical failure yields NaN entries and a flagged status."""
    cols = columns(sc)
    rec = dict.fromkeys(cols, math.nan)
    rec.update({f"p_{i}": float(x) for i, x in enumerate(p)})
    rec["rank"] = -1
    try:
        b = evaluate_bundle(sc.family, p, sc.fd, sc.tol_zero)
        rec["rank"] = b.spectrum.rank
        vals = []
        for q in sc.quantities:
            if q == "H":
                vals += _sym_values(qfi_spectral(b).values)
            elif q == "Hc":
                vals += _sym_values(continuous_qfi(b).values)
            elif q == "truncated":
                vals += _sym_values(truncated_metric(b).values)
            elif q == "hessian_sum":
                vals += _sym_values(kernel_hessian_sum(b).values)
            elif q == "sld":
                ops = sld(b).operators
                for m in range(b.n_params):
                    for k, l in _pairs(b.dim):
                        vals += [float(ops[m, k, l].real), float(ops[m, k, l].imag)]
            elif q == "jump":
                rep = jump(b, sc.jump_direction)
                vals += _sym_values(rep.delta.values) + [len(rep.excluded_branches)]
            elif q == "crb":
                crb = cramer_rao_lower_bound(qfi_spectral(b))
                vals += _sym_values(crb.bound) + [int(crb.singular)]
            elif q == "fidelity_curve":
                other = sc.family.density(np.asarray(p) + sc.fidelity_step * sc.fidelity_direction)
                r = root_fidelity(b.rho, other, sc.tol_zero)
                vals += [r * r, bures_distance_sq(b.rho, other, sc.tol_zero)]
            elif q == "regularization":
                trace = regularization_limit(sc.family, p, None, sc.regularization_schedule, sc.fd)
                for v in trace.qfi_values:
                    vals += _sym_values(v.values)
                vals += _sym_values(trace.extrapolated_limit.values) + [trace.relative_change]
        rec.update(zip(cols[len(p) + 2:], vals))
        rec["status"] = "ok"
    except (NumericalError, DomainError) as exc:
        rec["status"] = f"error:{type(exc).__name__}"
    return rec


def evaluate_scenario(sc: Scenario, threads: int = 1) -> list[dict]:
    """Evaluate every probe point; records are returned in grid order."""
    if threads <= 1:
        return [evaluate_point(sc, p) for p in sc.points]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda p: evaluate_point(sc, p), sc.points))


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.11e}"


def json_value(v):
    if isinstance(v, str) or isinstance(v, (int, np.integer)):
        return v if isinstance(v, str) else int(v)
    v = float(v)
    return None if math.isnan(v) else float(f"{v:.11e}")
