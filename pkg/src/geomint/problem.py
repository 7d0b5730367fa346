"""INI-style problem files.

Example (the singular problem on R^2)::

    [problem]
    kind = ocp
    states = x, y
    controls = u1, u2
    X1 = x + u1
    X2 = y
    F = 0.5*x^2 + 0.5*y^2 + x*u1 + y*u2 + 0.5*u1^2

    [integrator]
    theta = 0.5
    h = 0.01
    steps = 100

    [initial]
    x = 0.3
    p_x = 0.2
    p_y = 0.5

    [gauge]
    u2 = 0

Hamiltonian problems use ``kind = hamiltonian`` and an ``H`` key instead of
``X1..Xn``/``F``.  Missing initial values default to 0.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import expr as ex
from .config import SolverConfig

__all__ = ["ProblemFile", "ProblemError", "load_problem", "parse_problem"]


class ProblemError(ValueError):
    pass


@dataclass
class ProblemFile:
    kind: str
    states: tuple
    momenta: tuple
    controls: tuple = ()
    H: Optional[ex.Expr] = None
    X: tuple = ()
    F: Optional[ex.Expr] = None
    theta: float = 0.5
    h: float = 0.01
    steps: int = 100
    q0: tuple = ()
    p0: tuple = ()
    gauge: dict = field(default_factory=dict)
    solver: SolverConfig = SolverConfig()
    seed: int = 0
    sample_every: int = 10
    name: str = "problem"

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return len(self.controls)


def _line_of(text: str, section: str, key: str) -> int:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip().lower()
            continue
        if current == section.lower() and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return i
    return 0


def _names(value: str) -> tuple:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def parse_problem(text: str, source: str = "<string>") -> ProblemFile:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ProblemError(f"{source}: {exc}") from exc

    def where(section, key):
        return f"{source}:{_line_of(text, section, key)}"

    def get(section, key, default=None, conv=str):
        if not cp.has_option(section, key):
            if default is None:
                raise ProblemError(f"{source}: missing [{section}] {key}")
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except ValueError as exc:
            raise ProblemError(f"{where(section, key)}: bad value for {key}: {raw!r}") from exc

    def expression(section, key):
        raw = get(section, key)
        try:
            return ex.parse(raw)
        except ex.ExprSyntaxError as exc:
            raise ProblemError(f"{where(section, key)}: in {key} = {raw!r}: {exc}") from exc

    if not cp.has_section("problem"):
        raise ProblemError(f"{source}: missing [problem] section")
    kind = get("problem", "kind").strip().lower()
    if kind not in ("hamiltonian", "ocp"):
        raise ProblemError(f"{where('problem', 'kind')}: kind must be 'hamiltonian' or 'ocp'")

    if cp.has_option("problem", "states"):
        states = _names(cp.get("problem", "states"))
    else:
        n = get("problem", "n", conv=int)
        states = ("q",) if (n == 1 and kind == "hamiltonian") else tuple(f"q{i + 1}" for i in range(n))
    if cp.has_option("problem", "n") and get("problem", "n", conv=int) != len(states):
        raise ProblemError(f"{where('problem', 'n')}: n does not match the number of states")
    if cp.has_option("problem", "momenta"):
        momenta = _names(cp.get("problem", "momenta"))
    elif kind == "hamiltonian" and states == ("q",):
        momenta = ("p",)
    else:
        from .ocp import _default_momenta
        momenta = _default_momenta(states)
    if len(momenta) != len(states):
        raise ProblemError(f"{source}: need one momentum name per state")
    for nm in states + momenta:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", nm):
            raise ProblemError(f"{source}: invalid variable name {nm!r}")

    pf = ProblemFile(kind=kind, states=states, momenta=momenta, name=Path(source).stem)
    declared = set(states) | set(momenta)
    if kind == "hamiltonian":
        pf.H = expression("problem", "H")
        extra = ex.free_vars(pf.H) - declared
        if extra:
            raise ProblemError(f"{where('problem', 'H')}: undeclared variables {sorted(extra)}")
    else:
        if cp.has_option("problem", "controls"):
            controls = _names(cp.get("problem", "controls"))
        else:
            controls = tuple(f"u{a + 1}" for a in range(get("problem", "m", conv=int)))
        if cp.has_option("problem", "m") and get("problem", "m", conv=int) != len(controls):
            raise ProblemError(f"{where('problem', 'm')}: m does not match the number of controls")
        pf.controls = controls
        pf.X = tuple(expression("problem", f"X{i + 1}") for i in range(len(states)))
        pf.F = expression("problem", "F")
        allowed = set(states) | set(controls)
        for key, e in [(f"X{i + 1}", x) for i, x in enumerate(pf.X)] + [("F", pf.F)]:
            extra = ex.free_vars(e) - allowed
            if extra:
                raise ProblemError(f"{where('problem', key)}: undeclared variables {sorted(extra)}")

    pf.theta = get("integrator", "theta", 0.5, float)
    pf.h = get("integrator", "h", 0.01, float)
    pf.steps = get("integrator", "steps", 100, int)
    if not 0.0 <= pf.theta <= 1.0:
        raise ProblemError(f"{where('integrator', 'theta')}: theta must lie in [0, 1]")
    if pf.h <= 0:
        raise ProblemError(f"{where('integrator', 'h')}: h must be positive")
    if pf.steps < 0:
        raise ProblemError(f"{where('integrator', 'steps')}: steps must be >= 0")

    init = dict(cp.items("initial")) if cp.has_section("initial") else {}
    unknown = set(init) - declared
    if unknown:
        raise ProblemError(f"{source}: [initial] sets undeclared variables {sorted(unknown)}")
    try:
        pf.q0 = tuple(float(init.get(s, 0.0)) for s in states)
        pf.p0 = tuple(float(init.get(s, 0.0)) for s in momenta)
    except ValueError as exc:
        raise ProblemError(f"{source}: [initial]: {exc}") from exc
    if cp.has_section("gauge"):
        pf.gauge = {k: float(v) for k, v in cp.items("gauge")}
        bad = set(pf.gauge) - set(pf.controls)
        if bad:
            raise ProblemError(f"{source}: [gauge] names unknown controls {sorted(bad)}")

    pf.seed = get("run", "seed", 0, int)
    pf.sample_every = get("run", "sample_every", 10, int)
    pf.solver = SolverConfig(
        newton_tol=get("tolerances", "newton", 1e-12, float),
        max_iter=get("tolerances", "max_iter", 50, int),
        rank_tol=get("tolerances", "rank", 1e-9, float),
        fd_step=get("tolerances", "fd_step", 1e-6, float),
        seed=pf.seed,
    )
    return pf


def load_problem(path) -> ProblemFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemError(f"{path}: {exc.strerror}") from exc
    return parse_problem(text, str(path))
