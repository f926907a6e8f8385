"""Finite state spaces, Dirichlet-form matrices and their Green operators.

Conventions. A state space carries a reference measure m (one weight per
node). A form matrix B realizes E(u, v) = u^T B v, so the generator acts as
-A u = B u / m. Potentials are taken against node masses:

    (R mu)_i = sum_j G_ij mu({j}),       G = B^{-1},

and a density g is turned into masses g * m before R is applied.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .errors import FormError, ValidationError
from .kernels import profile_for, sphere_integral

MARKOV_TOL = 1e-12
TRANSIENCE_COND = 1e12
GREEN_NEG_TOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateSpace:
    positions: np.ndarray
    m: np.ndarray
    h: Optional[float] = None
    shape: Optional[tuple] = None
    extent: Optional[tuple] = None
    exterior: Optional[str] = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "m", _frozen(self.m))
        if len(self.m) < 1 or len(self.m) != len(pos):
            raise ValidationError("empty space")
        if np.any(self.m <= 0):
            raise ValidationError("cell measures must be positive")
        if len(np.unique(pos, axis=0)) != len(pos):
            raise ValidationError("node positions must be pairwise distinct")

    @property
    def n(self):
        return len(self.m)

    @property
    def d(self):
        return self.positions.shape[1]

    @property
    def is_grid(self):
        return self.shape is not None

    def nearest_node(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return int(np.argmin(np.linalg.norm(self.positions - x[None, :], axis=1)))

    def cell_box(self):
        """Bounding box of the union of grid cells (half a spacing around the nodes)."""
        if not self.is_grid:
            raise ValidationError("cell geometry needs a uniform grid")
        lo = self.positions.min(axis=0) - 0.5 * self.h
        hi = self.positions.max(axis=0) + 0.5 * self.h
        return lo, hi

    def subspace(self, nodes):
        nodes = np.asarray(nodes, dtype=int)
        return StateSpace(self.positions[nodes], self.m[nodes], h=self.h, exterior=self.exterior)


def build_space(d, extent, h, exterior="dirichlet"):
    """Uniform grid of the nodes strictly inside ``extent`` with spacing h.

    ``extent`` is (lo, hi) (reused for every axis) or one pair per axis; the
    string "unit square" / "unit interval" is accepted. Nodes sit at
    lo + k h, k >= 1, ordered lexicographically by coordinate.
    """
    if d not in (1, 2):
        raise ValidationError("dimension must be 1 or 2")
    if not h > 0:
        raise ValidationError("spacing h must be positive")
    if isinstance(extent, str):
        named = {"unit square": (0.0, 1.0), "unit interval": (0.0, 1.0)}
        if extent not in named:
            raise ValidationError(f"unknown extent {extent!r}")
        extent = named[extent]
    ext = np.asarray(extent, dtype=float)
    if ext.ndim == 1:
        ext = np.tile(ext, (d, 1))
    if ext.shape != (d, 2) or np.any(ext[:, 1] <= ext[:, 0]):
        raise ValidationError(f"bad extent {extent!r}")
    axes = []
    for lo, hi in ext:
        k = np.arange(1, int(np.floor((hi - lo) / h)) + 2)
        pts = lo + k * h
        axes.append(pts[pts < hi - 1e-9 * h])
    shape = tuple(len(a) for a in axes)
    if min(shape) == 0:
        raise ValidationError("empty space")
    mesh = np.meshgrid(*axes, indexing="ij")
    pos = np.stack([g.ravel() for g in mesh], axis=1)
    m = np.full(len(pos), h**d)
    return StateSpace(pos, m, h=float(h), shape=shape, extent=tuple(map(tuple, ext)), exterior=exterior)


@dataclass(frozen=True)
class OperatorSpec:
    kind: str = "local"
    a: Union[float, Callable, np.ndarray] = 1.0
    alpha: Optional[float] = None
    phi: Optional[Callable] = None
    mixing: Optional[Sequence] = None

    def __post_init__(self):
        if self.kind not in ("local", "nonlocal", "fractional", "mixed_stable"):
            raise ValidationError(f"unknown operator kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class FormMatrix:
    B: np.ndarray
    space: StateSpace
    provenance: object = None

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.shape != (self.space.n, self.space.n):
            raise ValidationError("form matrix does not match its space")
        object.__setattr__(self, "B", _frozen(B))

    @classmethod
    def from_matrix(cls, B, m=None, provenance="matrix"):
        B = np.asarray(B, dtype=float)
        n = len(B)
        m = np.ones(n) if m is None else m
        space = StateSpace(np.arange(n, dtype=float), m)
        return cls(B, space, provenance)

    @property
    def n(self):
        return self.space.n

    @property
    def m(self):
        return self.space.m

    @property
    def jump(self):
        J = -self.B.copy()
        np.fill_diagonal(J, 0.0)
        return J

    @property
    def killing(self):
        return self.B.sum(axis=1)

    def energy(self, u, v=None):
        v = u if v is None else v
        return float(np.asarray(u) @ self.B @ np.asarray(v))

    def markov_defects(self):
        """(max off-diagonal entry, min row sum, asymmetry)."""
        off = self.B - np.diag(np.diag(self.B))
        max_off = float(off.max()) if self.n > 1 else 0.0
        return max_off, float(self.killing.min()), float(np.abs(self.B - self.B.T).max())

    def check_markov(self, tol=MARKOV_TOL):
        max_off, min_row, asym = self.markov_defects()
        scale = max(1.0, float(np.abs(self.B).max()))
        if asym > tol * scale:
            raise FormError("form matrix not symmetric")
        if max_off > tol * scale:
            raise FormError("not Markovian: positive off-diagonal entry")
        if min_row < -tol * scale:
            raise FormError("not Markovian: negative row sum")
        return self

    def to_csv(self, path):
        write_triplets(path, self.B, header=f"form matrix B, n={self.n}", m=self.m)


def write_triplets(path, M, header="matrix", m=None, dense=False):
    rows, cols = (np.indices(M.shape).reshape(2, -1) if dense else np.nonzero(M))
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        if m is not None:
            fh.write("# m: " + " ".join(f"{x:.17g}" for x in m) + "\n")
        fh.write("row,col,value\n")
        for i, j in zip(rows, cols):
            fh.write(f"{i},{j},{M[i, j]:.17g}\n")


def read_triplets(path):
    """Inverse of :func:`write_triplets`; returns (matrix, m or None)."""
    m = None
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# m:"):
                    m = np.array([float(x) for x in line[4:].split()])
                continue
            if line.startswith("row"):
                continue
            i, j, v = line.split(",")
            entries.append((int(i), int(j), float(v)))
    if not entries:
        raise ValidationError(f"no matrix entries in {path}")
    n = 1 + max(max(i, j) for i, j, _ in entries)
    if m is not None:
        n = max(n, len(m))
    M = np.zeros((n, n))
    for i, j, v in entries:
        M[i, j] = v
    return M, m


def _coefficient_tensor(a, x, d):
    val = a(x) if callable(a) else a
    val = np.asarray(val, dtype=float)
    if val.ndim == 0:
        return float(val) * np.eye(d)
    if val.shape != (d, d):
        raise ValidationError(f"coefficient must be scalar or {d}x{d}")
    return val


def assemble_local(space, a=1.0):
    """Flux discretization of u -> div(a grad u) on a uniform grid.

    Edge weights are coefficient * h^(d-2), taken at the edge midpoint.
    In 2D an off-diagonal a_12 is carried by the diagonal neighbour
    (1, sign a_12), which keeps the stencil Markovian provided
    a_11, a_22 >= |a_12|. Edges leaving the grid become killing when the
    space has a Dirichlet exterior.
    """
    if not space.is_grid:
        raise ValidationError("local assembly needs a uniform grid")
    d, h = space.d, space.h
    shape = space.shape
    index = np.arange(space.n).reshape(shape)
    B = np.zeros((space.n, space.n))
    hd2 = h ** (d - 2)
    dirichlet = space.exterior == "dirichlet"

    def weights_at(xmid):
        A = _coefficient_tensor(a, xmid, d)
        if np.abs(A - A.T).max() > 1e-12 * max(1.0, np.abs(A).max()):
            raise ValidationError("coefficient matrix not symmetric")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise ValidationError("coefficient matrix not elliptic")
        if d == 1:
            return {(1,): A[0, 0]}
        off = A[0, 1]
        if A[0, 0] < abs(off) or A[1, 1] < abs(off):
            raise ValidationError("anisotropic coefficient breaks the Markov stencil (need a_kk >= |a_12|)")
        return {
            (1, 0): A[0, 0] - abs(off),
            (0, 1): A[1, 1] - abs(off),
            (1, 1): max(off, 0.0),
            (1, -1): max(-off, 0.0),
        }

    for multi in itertools.product(*(range(s) for s in shape)):
        i = index[multi]
        x = space.positions[i]
        for sign in (1, -1):
            # every direction is visited from both endpoints; only +e builds edges
            for e in ([(1,)] if d == 1 else [(1, 0), (0, 1), (1, 1), (1, -1)]):
                step = np.array(e) * sign
                w = weights_at(x + 0.5 * h * step)[e] * hd2
                if w == 0.0:
                    continue
                nb = tuple(np.array(multi) + step)
                inside = all(0 <= nb[k] < shape[k] for k in range(d))
                if inside:
                    if sign == 1:
                        j = index[nb]
                        B[i, j] -= w
                        B[j, i] -= w
                        B[i, i] += w
                        B[j, j] += w
                elif dirichlet:
                    B[i, i] += w
    return FormMatrix(B, space, OperatorSpec("local", a)).check_markov()


def _pair_coefficients(a, pos):
    if callable(a):
        n = len(pos)
        A = np.empty((n, n))
        for i in range(n):
            A[i] = [a(pos[i], pos[j]) for j in range(n)]
        return A
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return np.full((len(pos), len(pos)), float(a))
    return a


def assemble_nonlocal(space, spec, exterior=None):
    """Jump-form matrix of the kernel a(x,y) / (|x-y|^d phi(|x-y|)).

    Off-diagonal entries are midpoint quadrature over grid cells. The
    node's own cell is handled by a second-order Taylor model, which adds a
    nearest-neighbour local stencil with coefficient
    (1/(2d)) int_cell |z|^2 K(z) dz. The complement of the cell union is
    a zero exterior condition, realized as killing
    m_i a(x_i, x_i) int_{S^{d-1}} tail(s(theta)) dtheta.
    """
    if not space.is_grid:
        raise ValidationError("nonlocal assembly needs a uniform grid")
    exterior = space.exterior if exterior is None else exterior
    if exterior not in (None, "dirichlet", "none"):
        raise ValidationError(f"unknown exterior condition {exterior!r}")
    profile = profile_for(spec.kind, spec.alpha, spec.mixing, spec.phi)
    pos, m, d, h = space.positions, space.m, space.d, space.h
    A = _pair_coefficients(spec.a, pos)
    if np.abs(A - A.T).max() > 1e-12 * max(1.0, np.abs(A).max()):
        raise ValidationError("kernel coefficient a(x, y) not symmetric")
    if A.min() <= 0:
        raise ValidationError("kernel coefficient must be positive")

    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    np.fill_diagonal(dist, 1.0)
    J = A * profile.inv_phi(dist) / dist**d * m[:, None] * m[None, :]
    np.fill_diagonal(J, 0.0)

    # singular self-cell: |z|^2 K(z) integrated over the cube of side h
    second_moment = float(sphere_integral(np.zeros((1, d)), -0.5 * h * np.ones(d), 0.5 * h * np.ones(d), profile.inner)[0])
    c_local = second_moment / (2 * d) * h ** (d - 2)
    nn = np.isclose(dist, h, rtol=1e-9, atol=0.0)
    np.fill_diagonal(nn, False)
    J = J + c_local * A * nn

    B = -J
    kappa = np.zeros(space.n)
    if exterior == "dirichlet":
        lo, hi = space.cell_box()
        kappa += m * np.diag(A) * sphere_integral(pos, lo, hi, profile.tail)
        # nearest-neighbour stencil legs that leave the grid
        missing = 2 * d - nn.sum(axis=1)
        kappa += c_local * np.diag(A) * missing
    np.fill_diagonal(B, J.sum(axis=1) + kappa)
    return FormMatrix(B, space, spec).check_markov()


def assemble(space, spec):
    if spec.kind == "local":
        return assemble_local(space, spec.a)
    return assemble_nonlocal(space, spec)


def restrict(form, nodes):
    """Part of the form on a node subset: the principal submatrix.

    Couplings to removed nodes stay on the diagonal, so they turn into
    killing of the retained nodes.
    """
    nodes = np.unique(np.asarray(nodes, dtype=int))
    if len(nodes) == 0:
        raise ValidationError("restriction set D is empty")
    if nodes.min() < 0 or nodes.max() >= form.n:
        raise ValidationError("restriction set outside the space")
    if len(nodes) == form.n:
        return form
    return FormMatrix(form.B[np.ix_(nodes, nodes)], form.space.subspace(nodes), ("restrict", form.provenance))


def perturb(form, nu):
    """E_nu(u, v) = E(u, v) + sum_i u_i v_i nu({i}) for a nonnegative measure nu."""
    if nu.n != form.n:
        raise ValidationError("perturbation measure lives on another space")
    if np.any(nu.diffuse < 0) or np.any(nu.concentrated < 0):
        raise ValidationError("perturbation measure must be nonnegative")
    return FormMatrix(form.B + np.diag(nu.total), form.space, ("perturb", form.provenance))


@dataclass(frozen=True, eq=False)
class BeurlingDeny:
    jump: np.ndarray
    killing: np.ndarray
    resurrected: FormMatrix


def beurling_deny(form):
    """Split B into jump rates J(i,j) = -B_ij and killing kappa_i = row sums."""
    max_off, _, _ = form.markov_defects()
    if max_off > MARKOV_TOL * max(1.0, float(np.abs(form.B).max())):
        raise FormError("not Markovian")
    kappa = form.killing
    res = FormMatrix(form.B - np.diag(kappa), form.space, ("resurrected", form.provenance))
    return BeurlingDeny(form.jump, kappa, res)


def _check_transient(form):
    B = form.B
    if form.n == 0:
        raise FormError("form not transient")
    ev = linalg.eigvalsh(B)
    if ev[0] <= 0 or ev[-1] / ev[0] > TRANSIENCE_COND:
        raise FormError("form not transient")


@dataclass(frozen=True, eq=False)
class GreenOperator:
    G: np.ndarray
    form: FormMatrix

    @property
    def m(self):
        return self.form.m

    def apply(self, masses):
        """Potential of a vector of node masses (or of a DiscreteMeasure)."""
        masses = getattr(masses, "total", masses)
        return self.G @ np.asarray(masses, dtype=float)

    def apply_density(self, g):
        return self.G @ (self.m * np.asarray(g, dtype=float))

    def duality_defect(self):
        """|| m^{-1} B G m - I ||_inf: R inverts -A on densities."""
        M = self.form.B @ self.G * self.m[None, :] / self.m[:, None]
        return float(np.abs(M - np.eye(len(M))).max())

    def to_csv(self, path):
        write_triplets(path, self.G, header=f"Green kernel G, n={len(self.G)}", m=self.m, dense=True)


def green(form):
    """Exact dense Green kernel G = B^{-1}, with symmetry and sign checks."""
    _check_transient(form)
    c = linalg.cho_factor(form.B)
    G = linalg.cho_solve(c, np.eye(form.n))
    G = 0.5 * (G + G.T)
    if G.min() < -GREEN_NEG_TOL:
        raise FormError("Markov violation: negative Green entry")
    return GreenOperator(_frozen(G), form)


def resolvent(form, alpha, g):
    """R_alpha g: solves (B + alpha diag(m)) u = m * g."""
    if alpha < 0:
        raise ValidationError("resolvent parameter must be nonnegative")
    if alpha == 0:
        _check_transient(form)
    m = form.m
    return linalg.solve(form.B + alpha * np.diag(m), m * np.asarray(g, dtype=float), assume_a="pos")


@dataclass(frozen=True, eq=False)
class WeightPair:
    rho: np.ndarray
    varrho: np.ndarray
    rho_source: str
    scale: float = field(default=1.0)


def weights(form, rho_source="constant", G=None):
    """Excessive weight rho and the bounded weight varrho = c rho with R varrho <= rho.

    ``rho_source`` is "constant", "principal_eigenfunction", or an explicit
    positive vector. c is the largest value <= 1 satisfying R(c rho) <= rho.
    """
    B, m = form.B, form.m
    if isinstance(rho_source, str):
        if rho_source == "constant":
            rho = np.ones(form.n)
        elif rho_source == "principal_eigenfunction":
            _, vecs = linalg.eigh(B, np.diag(m), subset_by_index=[0, 0])
            rho = vecs[:, 0]
            rho = rho * np.sign(rho.sum())
            rho = rho / rho.max()
        else:
            raise ValidationError(f"unknown rho source {rho_source!r}")
        source = rho_source
    else:
        rho = np.asarray(rho_source, dtype=float)
        source = "user"
    if rho.shape != (form.n,) or np.any(rho <= 0):
        raise ValidationError("rho must be a strictly positive vector on the space")
    Brho = B @ rho
    if Brho.min() < -MARKOV_TOL * max(1.0, float(np.abs(B).max())):
        i = int(np.argmin(Brho))
        raise ValidationError(f"rho is not excessive: (B rho)_{i} = {Brho[i]:.6g} < 0")
    G = green(form) if G is None else G
    Rrho = G.apply_density(rho)
    c = min(1.0, float(np.min(rho / Rrho)))
    assert c > 0, "transient form must admit a positive varrho"
    varrho = c * rho
    if np.any(G.apply_density(varrho) > rho + 1e-12):
        c *= 1 - 1e-12
        varrho = c * rho
    return WeightPair(_frozen(rho), _frozen(varrho), source, c)
