"""Problem, design and report files (YAML).

Problem file::

    model: emax                     # emax | exponential | linlog
    sharing: common_location_scale  # individual | common_location | common_location_scale
    groups:
      - d_max: 1.0
        sigma2: 1.0
        prior_theta2: {uniform_on: [0.2, 0.275, 0.35, 0.425, 0.5]}
        prior_slope: {atoms: [1.0], probs: [1.0]}   # common_location only
    prior_location: {atoms: [0.0], probs: [1.0]}
    prior_scale: {atoms: [1.0], probs: [1.0]}       # individual / common_location_scale
    pso: {seed: 1, iterations: 500}
    check: {grid: 1001, tolerance: 0.001}

Design file::

    groups:
      - points: [0.0, 0.5, 1.0]
        weights: [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]
    allocation: [1.0]
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .core import (AllocationMeasure, CompositeDesign, Design, DiscretePrior, ModelKind,
                   ParameterStructure, SharingMode)
from .pso import PsoConfig


class ProblemError(ValueError):
    """Malformed problem or design document."""


_TOP_KEYS = {"model", "sharing", "groups", "prior_location", "prior_scale", "pso", "check"}
_GROUP_KEYS = {"d_max", "sigma2", "prior_theta2", "prior_slope"}
_PRIOR_KEYS = {"atoms", "probs", "uniform_on"}
_CHECK_KEYS = {"grid", "tolerance"}
_PSO_KEYS = {f.name for f in fields(PsoConfig)}


def _line_index(node, path=(), out=None) -> dict:
    """Map key paths to 1-based source lines from a composed YAML node."""
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _line_index(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


class _Doc:
    def __init__(self, text: str, source: str):
        self.source = source
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" line {mark.line + 1}" if mark is not None else ""
            raise ProblemError(f"{source}:{where}: YAML syntax error: {exc}") from exc
        self.lines = _line_index(node) if node is not None else {}

    def fail(self, path: tuple, msg: str):
        key = ".".join(f"[{p}]" if isinstance(p, int) else str(p) for p in path).replace(".[", "[")
        line = None
        for n in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:n]))
            if line is not None:
                break
        where = f" line {line}" if line is not None else ""
        raise ProblemError(f"{self.source}:{where}: {key or '<root>'}: {msg}")

    def mapping(self, value, path, allowed):
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
        unknown = set(value) - allowed
        if unknown:
            k = sorted(map(str, unknown))[0]
            self.fail(path + (k,), f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return value

    def number(self, value, path, positive=False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        if positive and not value > 0:
            self.fail(path, f"must be positive, got {value}")
        return float(value)

    def numbers(self, value, path) -> list[float]:
        if not isinstance(value, list) or not value:
            self.fail(path, "expected a non-empty list of numbers")
        return [self.number(v, path + (i,)) for i, v in enumerate(value)]

    def prior(self, value, path) -> DiscretePrior:
        value = self.mapping(value, path, _PRIOR_KEYS)
        if "uniform_on" in value:
            if "atoms" in value or "probs" in value:
                self.fail(path, "give either uniform_on or atoms/probs, not both")
            return DiscretePrior.uniform(self.numbers(value["uniform_on"], path + ("uniform_on",)))
        if "atoms" not in value:
            self.fail(path, "missing 'atoms' (or 'uniform_on')")
        atoms = self.numbers(value["atoms"], path + ("atoms",))
        probs = value.get("probs")
        if probs is None:
            probs = [1.0 / len(atoms)] * len(atoms)
        else:
            probs = self.numbers(probs, path + ("probs",))
        if len(probs) != len(atoms):
            self.fail(path + ("probs",), f"{len(probs)} probabilities for {len(atoms)} atoms")
        try:
            return DiscretePrior(atoms, probs)
        except ValueError as exc:
            self.fail(path + ("probs",), str(exc))


@dataclass
class Problem:
    structure: ParameterStructure
    group_priors: list[DiscretePrior]
    prior: DiscretePrior
    pso: dict = field(default_factory=dict)
    grid: int = 1001
    tolerance: float = 1e-3

    def pso_config(self, seed: int | None = None) -> PsoConfig:
        opts = dict(self.pso)
        if seed is not None:
            opts["seed"] = seed
        opts.setdefault("seed", 0)
        return PsoConfig(**opts)


def parse_problem(text: str, source: str = "<problem>") -> Problem:
    doc = _Doc(text, source)
    data = doc.mapping(doc.data, (), _TOP_KEYS)
    for key in ("model", "sharing", "groups"):
        if key not in data:
            doc.fail((key,), "required key missing")
    try:
        model = ModelKind(data["model"])
    except ValueError:
        doc.fail(("model",), f"unknown model {data['model']!r} (emax, exponential, linlog)")
    try:
        sharing = SharingMode(data["sharing"])
    except ValueError:
        doc.fail(("sharing",), f"unknown sharing mode {data['sharing']!r}")
    groups = data["groups"]
    if not isinstance(groups, list) or not groups:
        doc.fail(("groups",), "expected a non-empty list of groups")
    d_max, sigma2, gpriors, slopes = [], [], [], []
    for i, g in enumerate(groups):
        path = ("groups", i)
        g = doc.mapping(g, path, _GROUP_KEYS)
        for key in ("d_max", "prior_theta2"):
            if key not in g:
                doc.fail(path + (key,), "required key missing")
        d_max.append(doc.number(g["d_max"], path + ("d_max",), positive=True))
        sigma2.append(doc.number(g.get("sigma2", 1.0), path + ("sigma2",), positive=True))
        pr = doc.prior(g["prior_theta2"], path + ("prior_theta2",))
        if (pr.points <= 0).any():
            doc.fail(path + ("prior_theta2", "atoms"), "θ2 atoms must be strictly positive")
        gpriors.append(pr)
        if "prior_slope" in g:
            if sharing is not SharingMode.COMMON_LOCATION:
                doc.fail(path + ("prior_slope",), "only used with sharing: common_location")
            slopes.append(doc.prior(g["prior_slope"], path + ("prior_slope",)))
        else:
            slopes.append(DiscretePrior.dirac([1.0]))
    try:
        s = ParameterStructure(model, sharing, tuple(sigma2), tuple(d_max))
    except ValueError as exc:
        doc.fail(("groups",), str(exc))
    if sharing is SharingMode.COMMON_LOCATION and s.M < 2:
        doc.fail(("groups",), "common_location needs at least two groups")
    location = (doc.prior(data["prior_location"], ("prior_location",))
                if "prior_location" in data else None)
    scale = None
    if "prior_scale" in data:
        if sharing is SharingMode.COMMON_LOCATION:
            doc.fail(("prior_scale",), "use per-group prior_slope with common_location")
        scale = doc.prior(data["prior_scale"], ("prior_scale",))
    prior = s.full_prior(gpriors, location=location, scale=scale, slopes=slopes)
    pso = {}
    if "pso" in data:
        pso = dict(doc.mapping(data["pso"], ("pso",), _PSO_KEYS))
        try:
            PsoConfig(**{"seed": 0, **pso})
        except (TypeError, ValueError) as exc:
            doc.fail(("pso",), str(exc))
    grid, tol = 1001, 1e-3
    if "check" in data:
        chk = doc.mapping(data["check"], ("check",), _CHECK_KEYS)
        if "grid" in chk:
            if not isinstance(chk["grid"], int) or chk["grid"] < 2:
                doc.fail(("check", "grid"), "expected an integer >= 2")
            grid = chk["grid"]
        if "tolerance" in chk:
            tol = doc.number(chk["tolerance"], ("check", "tolerance"))
    return Problem(s, gpriors, prior, pso, grid, tol)


def load_problem(path) -> Problem:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemError(f"{path}: cannot read: {exc}") from exc
    return parse_problem(text, str(path))


def parse_design(text: str, source: str = "<design>") -> CompositeDesign:
    """Read a design document; a solve result (with a ``design`` key) also works."""
    doc = _Doc(text, source)
    data = doc.data
    path: tuple = ()
    if isinstance(data, dict) and "design" in data:
        data, path = data["design"], ("design",)
    data = doc.mapping(data, path, {"groups", "allocation"})
    if "groups" not in data:
        doc.fail(path + ("groups",), "required key missing")
    groups = data["groups"]
    if not isinstance(groups, list) or not groups:
        doc.fail(path + ("groups",), "expected a non-empty list")
    designs = []
    for i, g in enumerate(groups):
        gp = path + ("groups", i)
        g = doc.mapping(g, gp, {"points", "weights"})
        pts = doc.numbers(g.get("points"), gp + ("points",))
        ws = doc.numbers(g.get("weights"), gp + ("weights",))
        if len(pts) != len(ws):
            doc.fail(gp, f"{len(pts)} points but {len(ws)} weights")
        designs.append(Design(tuple(pts), tuple(ws)))
    lam = (doc.numbers(data["allocation"], path + ("allocation",))
           if "allocation" in data else [1.0] if len(designs) == 1 else None)
    if lam is None:
        doc.fail(path + ("allocation",), "required for more than one group")
    if len(lam) != len(designs):
        doc.fail(path + ("allocation",), f"{len(lam)} weights for {len(designs)} groups")
    return CompositeDesign(tuple(designs), AllocationMeasure(tuple(lam)))


def load_design(path) -> CompositeDesign:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemError(f"{path}: cannot read: {exc}") from exc
    return parse_design(text, str(path))


def design_to_dict(xi: CompositeDesign, digits: int | None = None) -> dict:
    fmt = (lambda v: float(v)) if digits is None else (lambda v: float(f"{v:.{digits}g}"))
    return {
        "groups": [{"points": [fmt(p) for p in g.points],
                    "weights": [fmt(w) for w in g.weights]} for g in xi.groups],
        "allocation": [fmt(l) for l in xi.allocation.lambdas],
    }


def dump(data: dict) -> str:
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)
