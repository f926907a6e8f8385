"""Signed measures on a finite state space, split into diffuse and concentrated layers.

A node can carry both diffuse mass (density times cell measure, the part
charging the whole cell) and a concentrated atom (mass sitting on a point
that is polar in the refinement limit). The two layers play the roles of
mu_d and mu_c: they are mutually singular even when they share a node, so
lattice operations act on each layer separately.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DIFFUSE = "diffuse"
CONCENTRATED = "concentrated"


def _vec(x, n):
    a = np.zeros(n) if x is None else np.array(x, dtype=float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape != (n,):
        raise ValidationError(f"expected a vector of length {n}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Node masses in two layers; ``space`` supplies the cell measure m."""

    space: object
    diffuse: np.ndarray = None
    concentrated: np.ndarray = None

    def __post_init__(self):
        n = self.space.n
        object.__setattr__(self, "diffuse", _vec(self.diffuse, n))
        object.__setattr__(self, "concentrated", _vec(self.concentrated, n))
        if not (np.all(np.isfinite(self.diffuse)) and np.all(np.isfinite(self.concentrated))):
            raise ValidationError("measure masses must be finite")

    # -- construction -------------------------------------------------------

    @classmethod
    def zero(cls, space):
        return cls(space)

    @classmethod
    def from_density(cls, space, density):
        return cls(space, diffuse=_vec(density, space.n) * space.m)

    @classmethod
    def from_parts(cls, space, density=None, atoms=()):
        """Density (per unit m) plus (node, mass, tag) atoms.

        Diffuse atoms merge into the diffuse layer; a node takes at most
        one concentrated atom.
        """
        diffuse = _vec(density, space.n) * space.m
        conc = np.zeros(space.n)
        seen = set()
        for node, mass, tag in atoms:
            node = int(node)
            if not 0 <= node < space.n:
                raise ValidationError(f"atom at node {node} outside the space")
            if tag == DIFFUSE:
                diffuse = diffuse + np.eye(space.n)[node] * mass
            elif tag == CONCENTRATED:
                if node in seen:
                    raise ValidationError(f"two concentrated atoms at node {node}")
                seen.add(node)
                conc[node] = mass
            else:
                raise ValidationError(f"unknown atom tag {tag!r}")
        return cls(space, diffuse, conc)

    @classmethod
    def atom(cls, space, node, mass=1.0, tag=CONCENTRATED):
        return cls.from_parts(space, atoms=[(node, mass, tag)])

    # -- views ----------------------------------------------------------------

    @property
    def n(self):
        return self.space.n

    @property
    def total(self):
        return self.diffuse + self.concentrated

    @property
    def density(self):
        return self.diffuse / self.space.m

    @property
    def atoms(self):
        return [(int(i), float(self.concentrated[i]), CONCENTRATED) for i in np.nonzero(self.concentrated)[0]]

    def is_zero(self):
        return not (np.any(self.diffuse) or np.any(self.concentrated))

    def _same(self, other):
        if self.space is other.space:
            return
        if self.n != other.n or not np.array_equal(self.space.m, other.space.m):
            raise ValidationError("measures live on different spaces")

    def _map(self, fn, other=None):
        if other is None:
            return DiscreteMeasure(self.space, fn(self.diffuse), fn(self.concentrated))
        self._same(other)
        return DiscreteMeasure(
            self.space, fn(self.diffuse, other.diffuse), fn(self.concentrated, other.concentrated)
        )

    # -- arithmetic and lattice -----------------------------------------------

    def __add__(self, other):
        return self._map(np.add, other)

    def __sub__(self, other):
        return self._map(np.subtract, other)

    def __neg__(self):
        return self._map(np.negative)

    def __mul__(self, c):
        return self._map(lambda x: c * x)

    __rmul__ = __mul__

    def sup(self, other):
        return self._map(np.maximum, other)

    def inf(self, other):
        return self._map(np.minimum, other)

    @property
    def pos(self):
        return self._map(lambda x: np.maximum(x, 0.0))

    @property
    def neg(self):
        return self._map(lambda x: np.maximum(-x, 0.0))

    @property
    def abs(self):
        return self._map(np.abs)

    def parts(self):
        return self.pos, self.neg, self.abs

    def le(self, other, tol=0.0):
        """mu <= nu layerwise, up to ``tol``."""
        self._same(other)
        return bool(
            np.all(self.diffuse <= other.diffuse + tol) and np.all(self.concentrated <= other.concentrated + tol)
        )

    def allclose(self, other, tol=1e-12):
        self._same(other)
        return bool(
            np.abs(self.diffuse - other.diffuse).max(initial=0) <= tol
            and np.abs(self.concentrated - other.concentrated).max(initial=0) <= tol
        )

    def split_dc(self):
        """(mu_d, mu_c)."""
        return DiscreteMeasure(self.space, self.diffuse), DiscreteMeasure(self.space, None, self.concentrated)

    def restrict(self, nodes):
        """mu restricted to a node set A."""
        mask = np.zeros(self.n, dtype=bool)
        mask[np.asarray(list(nodes), dtype=int)] = True
        return self._map(lambda x: np.where(mask, x, 0.0))

    @property
    def support(self):
        return np.nonzero((self.diffuse != 0) | (self.concentrated != 0))[0]

    def layer_supports(self):
        return np.nonzero(self.diffuse)[0], np.nonzero(self.concentrated)[0]

    def to_rows(self):
        """CSV rows (node, density, atom_mass, tag)."""
        dens = self.density
        return [
            (i, dens[i], self.concentrated[i], CONCENTRATED if self.concentrated[i] != 0 else "")
            for i in range(self.n)
        ]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# schema: node,density,atom_mass,tag\n")
            fh.write("node,density,atom_mass,tag\n")
            for i, dens, mass, tag in self.to_rows():
                fh.write(f"{i},{dens:.17g},{mass:.17g},{tag}\n")


def lattice(mu, nu, op):
    ops = {"sup": mu.sup, "inf": mu.inf, "plus": mu.__add__, "minus": mu.__sub__}
    if op not in ops:
        raise ValidationError(f"unknown lattice op {op!r}")
    return ops[op](nu)


def parts(mu):
    return mu.parts()


def tv_norm(mu, rho=None):
    """||mu||_rho = int rho d|mu|, both layers counted."""
    rho = np.ones(mu.n) if rho is None else np.asarray(rho, dtype=float)
    if rho.shape != (mu.n,):
        raise ValidationError("weight rho does not match the space")
    return float(rho @ (np.abs(mu.diffuse) + np.abs(mu.concentrated)))


def orthogonal(mu, nu):
    """mu and nu are mutually singular.

    Diffuse and concentrated layers never charge the same set, so only
    like layers are compared.
    """
    mu._same(nu)
    d = np.any((mu.diffuse != 0) & (nu.diffuse != 0))
    c = np.any((mu.concentrated != 0) & (nu.concentrated != 0))
    return not (d or c)


def restrict_measure(mu, nodes):
    return mu.restrict(nodes)


def split_dc(mu):
    return mu.split_dc()


def apply_green(G, mu):
    """(R mu)_i = sum_j G_ij mu({j})."""
    if mu.n != len(G.G):
        raise ValidationError("measure and Green operator live on different spaces")
    return G.G @ mu.total


def parse_measure(space, density=None, atoms=None):
    """Measure literal: density as a constant or "node:value" list, atoms as
    "node:mass:tag" items separated by commas or semicolons."""
    dens = np.zeros(space.n)
    if density not in (None, ""):
        text = str(density).strip()
        if ":" in text:
            for item in text.replace(";", ",").split(","):
                if item.strip():
                    node, val = item.split(":")
                    dens[int(node)] = float(val)
        else:
            dens[:] = float(text)
    items = []
    if atoms not in (None, ""):
        for item in str(atoms).replace(";", ",").split(","):
            item = item.strip()
            if not item:
                continue
            fields = item.split(":")
            if len(fields) == 2:
                fields.append(CONCENTRATED)
            if len(fields) != 3:
                raise ValidationError(f"bad atom literal {item!r}")
            items.append((int(fields[0]), float(fields[1]), fields[2].strip()))
    return DiscreteMeasure.from_parts(space, dens, items)
