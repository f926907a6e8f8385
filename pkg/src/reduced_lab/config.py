"""Scenario configuration: INI files with sections [space], [operator],
[nonlinearity], [measure], [weights] and [task], plus the compact spec
strings accepted on the command line."""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dirichlet import FormMatrix, OperatorSpec, StateSpace, assemble, build_space, read_triplets
from .errors import ValidationError
from .measures import DiscreteMeasure, parse_measure
from . import nonlinearity as nl

TASKS = ("solve", "reduce", "project", "capacity", "suite", "study", "equiv_study")


def parse_number(text):
    text = str(text).strip()
    try:
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"not a number: {text!r}") from None


def parse_list(text):
    return [parse_number(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


def parse_schedule(text):
    """"start:factor:stop" (geometric) or a comma list."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"schedule {text!r} must read start:factor:stop")
        start, factor, stop = (parse_number(p) for p in parts)
        if start <= 0 or factor <= 1 or stop < start:
            raise ValidationError(f"bad geometric schedule {text!r}")
        out, n = [], start
        while n <= stop * (1 + 1e-12):
            out.append(n)
            n *= factor
        return out
    return parse_list(text)


def parse_mixing(text):
    """"alpha:weight, alpha:weight"."""
    terms = []
    for item in str(text).split(","):
        if item.strip():
            a, w = item.split(":")
            terms.append((parse_number(a), parse_number(w)))
    return terms


def nonlinearity_from(section):
    """Build a Nonlinearity from a mapping of config keys."""
    family = section.get("family")
    if family is None:
        raise ValidationError("[nonlinearity] needs a family")
    family = family.strip()
    if family == "power":
        c = section.get("c", "1")
        c = parse_list(c) if "," in str(c) else parse_number(c)
        return nl.power(parse_number(section.get("p", "3")), np.asarray(c))
    if family == "exp":
        return nl.exponential()
    if family == "bounded":
        g = section.get("g", "1")
        g = parse_list(g) if "," in str(g) else parse_number(g)
        return nl.bounded(np.asarray(g), section.get("shape", "tanh").strip())
    if family == "expression":
        if "expr" not in section:
            raise ValidationError("expression family needs expr")
        mono = str(section.get("nonincreasing", "false")).strip().lower() in ("1", "true", "yes")
        return nl.expression(section["expr"], nonincreasing=mono)
    if family == "tabulated":
        if "table" not in section:
            raise ValidationError("tabulated family needs a table file")
        return _read_table(section["table"], section.get("groups"))
    raise ValidationError(f"unknown nonlinearity family {family!r}")


def _read_table(path, groups=None):
    """Two-column (y, f) tables; blank lines separate node groups."""
    if not os.path.exists(path):
        raise ValidationError(f"table file {path!r} not found")
    tables, cur = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                continue
            if not line:
                if cur:
                    tables.append(cur)
                    cur = []
                continue
            cur.append([parse_number(x) for x in line.replace(",", " ").split()[:2]])
    if cur:
        tables.append(cur)
    tables = [(np.array(t)[:, 0], np.array(t)[:, 1]) for t in tables]
    grp = None if groups in (None, "") else [int(g) for g in parse_list(groups)]
    return nl.tabulated(tables, grp)


def parse_nl_spec(text):
    """Compact form "family:key=value,key=value", e.g. "power:p=3"."""
    family, _, rest = str(text).partition(":")
    section = {"family": family}
    if family == "expression":
        section["expr"] = rest
        return nonlinearity_from(section)
    for item in rest.split(","):
        if item.strip():
            if "=" not in item:
                raise ValidationError(f"bad nonlinearity parameter {item!r}")
            k, v = item.split("=", 1)
            section[k.strip()] = v.strip()
    return nonlinearity_from(section)


def read_measure_csv(space, path):
    dens = np.zeros(space.n)
    atoms = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("node"):
                continue
            parts = line.strip().split(",")
            if len(parts) < 3:
                continue
            i = int(parts[0])
            dens[i] = float(parts[1])
            mass = float(parts[2])
            tag = parts[3].strip() if len(parts) > 3 and parts[3].strip() else "concentrated"
            if mass:
                atoms.append((i, mass, tag))
    return DiscreteMeasure.from_parts(space, dens, atoms)


def parse_measure_spec(space, text):
    """A measure CSV path, or "density=...;atoms=node:mass:tag|..."."""
    if os.path.exists(str(text)):
        return read_measure_csv(space, text)
    fields = {}
    for item in str(text).split(";"):
        if item.strip():
            if "=" not in item:
                raise ValidationError(f"bad measure literal {item!r}")
            k, v = item.split("=", 1)
            fields[k.strip()] = v.strip().replace("|", ",")
    return parse_measure(space, fields.get("density"), fields.get("atoms"))


def load_form(path):
    """Form matrix from a triplet CSV with an optional "# m:" line."""
    if not os.path.exists(path):
        raise ValidationError(f"form file {path!r} not found")
    B, m = read_triplets(path)
    return FormMatrix.from_matrix(B, m, provenance=path)


@dataclass
class ScenarioConfig:
    task: str
    space: dict = field(default_factory=dict)
    operator: dict = field(default_factory=dict)
    nonlinearity: dict = field(default_factory=dict)
    measure: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    source: str = None

    def get(self, key, default=None):
        return self.options.get(key, default)

    @property
    def tol(self):
        return parse_number(self.get("tol", "1e-10"))

    @property
    def seed(self):
        return int(self.get("seed", "0"))

    @property
    def schedule(self):
        from .reduction import DEFAULT_SCHEDULE

        text = self.get("schedule")
        return DEFAULT_SCHEDULE if text is None else parse_schedule(text)

    @property
    def hs(self):
        text = self.get("hs") or self.space.get("hs")
        if text is None:
            raise ValidationError("study needs an h ladder (hs = ...)")
        return parse_list(text)

    def operator_spec(self):
        o = self.operator
        kind = o.get("kind", "local").strip()
        a = parse_number(o.get("a", "1"))
        alpha = parse_number(o["alpha"]) if "alpha" in o else None
        mixing = parse_mixing(o["mixing"]) if "mixing" in o else None
        return OperatorSpec(kind, a, alpha, None, mixing)

    def build_space(self, h=None):
        s = self.space
        if "d" not in s or ("h" not in s and h is None):
            raise ValidationError("[space] needs d and h (or a form file)")
        extent = s.get("extent", "-1,1")
        if extent.strip() == "unit square":
            ext = extent.strip()
        else:
            vals = parse_list(extent)
            ext = tuple(vals) if len(vals) == 2 else tuple(zip(vals[0::2], vals[1::2]))
        return build_space(int(s["d"]), ext, parse_number(h if h is not None else s["h"]),
                           s.get("exterior", "dirichlet").strip())

    def build_form(self):
        if "form" in self.space:
            return load_form(self.space["form"])
        space = self.build_space()
        return assemble(space, self.operator_spec())

    def build_nonlinearity(self, section=None):
        return nonlinearity_from(self.nonlinearity if section is None else section)

    def phi(self, space):
        text = self.nonlinearity.get("phi")
        if text is None:
            return None
        vals = parse_list(text)
        return np.full(space.n, vals[0]) if len(vals) == 1 else np.asarray(vals)

    def build_measure(self, space):
        ms = self.measure
        if not ms:
            raise ValidationError("config has no [measure] section")
        if "file" in ms:
            return read_measure_csv(space, ms["file"])
        mu = parse_measure(space, ms.get("density"), ms.get("atoms"))
        if "atom_site" in ms:
            node = space.nearest_node(parse_list(ms["atom_site"]))
            mass = parse_number(ms.get("atom_mass", "1"))
            mu = mu + DiscreteMeasure.atom(space, node, mass)
        return mu

    def site(self):
        return tuple(parse_list(self.measure.get("atom_site", "0")))


def load_config(path):
    if not os.path.exists(path):
        raise ValidationError(f"config file {path!r} not found")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from None
    if not cp.has_section("task"):
        raise ValidationError("config needs a [task] section")
    options = dict(cp["task"])
    task = options.pop("task", None) or options.pop("name", None)
    if task not in TASKS:
        raise ValidationError(f"unknown or missing task {task!r}; choose from {', '.join(TASKS)}")
    sec = {name: dict(cp[name]) if cp.has_section(name) else {} for name in
           ("space", "operator", "nonlinearity", "measure", "weights")}
    cfg = ScenarioConfig(task, options=options, source=path, **sec)
    _require(cfg)
    return cfg


def _require(cfg):
    needs = {
        "solve": ("space", "nonlinearity", "measure"),
        "reduce": ("space", "nonlinearity", "measure"),
        "project": ("space", "nonlinearity", "measure"),
        "capacity": ("space",),
        "suite": (),
        "study": ("space", "operator", "nonlinearity", "measure"),
        "equiv_study": ("space", "operator", "nonlinearity", "measure"),
    }[cfg.task]
    for name in needs:
        if not getattr(cfg, name):
            raise ValidationError(f"task {cfg.task} needs a [{name}] section")
    if cfg.task == "capacity" and "set" not in cfg.options:
        raise ValidationError("capacity task needs set = <nodes>")
    if cfg.task == "equiv_study":
        for key in ("g_family", "c1", "c2", "r"):
            if key not in cfg.options:
                raise ValidationError(f"equiv_study needs {key} in [task]")
