import numpy as np
import pytest
from hypothesis import given, strategies as st

from reduced_lab.dirichlet import green
from reduced_lab.errors import ValidationError
from reduced_lab.measures import (
    DiscreteMeasure, apply_green, lattice, orthogonal, parse_measure, parts, restrict_measure, split_dc, tv_norm,
)
from reduced_lab.suite import random_form, random_measure


@pytest.fixture
def pair(fix2):
    s = fix2.space
    mu = DiscreteMeasure.from_parts(s, atoms=[(0, 2.0, "concentrated"), (1, -1.0, "concentrated")])
    nu = DiscreteMeasure.atom(s, 0, 1.0)
    return mu, nu


def test_lattice_examples(pair):
    mu, nu = pair
    np.testing.assert_array_equal(lattice(mu, nu, "sup").total, [2, 0])
    np.testing.assert_array_equal(lattice(mu, nu, "inf").total, [1, -1])
    p, n, a = parts(mu)
    np.testing.assert_array_equal(p.total, [2, 0])
    np.testing.assert_array_equal(n.total, [0, 1])
    np.testing.assert_array_equal(a.total, [2, 1])
    with pytest.raises(ValidationError):
        lattice(mu, nu, "xor")


def test_tv_norm_examples(pair):
    mu, _ = pair
    assert tv_norm(mu, [1, 0.5]) == 2.5
    assert tv_norm(DiscreteMeasure.zero(mu.space)) == 0
    with pytest.raises(ValidationError):
        tv_norm(mu, [1.0])


def test_orthogonal_restrict_split(fix2, pair):
    s = fix2.space
    d1, d2 = DiscreteMeasure.atom(s, 0), DiscreteMeasure.atom(s, 1)
    assert orthogonal(d1, d2) and not orthogonal(d1, d1)
    mu, _ = pair
    np.testing.assert_array_equal(restrict_measure(mu, [0]).total, [2, 0])
    both = DiscreteMeasure.from_parts(s, [0.5, 0.25], [(1, 4.0, "concentrated")])
    md, mc = split_dc(both)
    np.testing.assert_array_equal(md.diffuse, [0.5, 0.25])
    np.testing.assert_array_equal(mc.concentrated, [0, 4])
    assert md.concentrated.sum() == 0 and mc.diffuse.sum() == 0


def test_layers_are_mutually_singular(fix2):
    s = fix2.space
    d = DiscreteMeasure.from_density(s, [1.0, 0.0])
    c = DiscreteMeasure.atom(s, 0, 1.0)
    assert orthogonal(d, c)


def test_apply_green_examples(fix2):
    G = green(fix2)
    np.testing.assert_allclose(apply_green(G, DiscreteMeasure.atom(fix2.space, 0, 3.0)), [2, 1], atol=1e-14)
    assert not np.any(apply_green(G, DiscreteMeasure.zero(fix2.space)))


def test_atom_validation(fix2):
    s = fix2.space
    with pytest.raises(ValidationError):
        DiscreteMeasure.from_parts(s, atoms=[(0, 1.0, "concentrated"), (0, 2.0, "concentrated")])
    with pytest.raises(ValidationError):
        DiscreteMeasure.atom(s, 5)
    with pytest.raises(ValidationError):
        DiscreteMeasure.atom(s, 0, np.inf)
    with pytest.raises(ValidationError):
        DiscreteMeasure.atom(s, 0, 1.0, tag="weird")


def test_diffuse_atoms_merge(fix2):
    mu = DiscreteMeasure.from_parts(fix2.space, [1.0, 0.0], [(0, 0.5, "diffuse")])
    np.testing.assert_array_equal(mu.diffuse, [1.5, 0.0])


def test_parse_measure_literal(fix2):
    mu = parse_measure(fix2.space, "1:2.5", "0:3:concentrated")
    np.testing.assert_array_equal(mu.diffuse, [0, 2.5])
    np.testing.assert_array_equal(mu.concentrated, [3, 0])


def test_csv_export(tmp_path, fix2):
    path = tmp_path / "mu.csv"
    DiscreteMeasure.atom(fix2.space, 1, 2.0).to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[1] == "node,density,atom_mass,tag"
    assert lines[3].endswith(",2,concentrated")


def test_mismatched_spaces(fix1, fix2):
    with pytest.raises(ValidationError):
        DiscreteMeasure.zero(fix1.space) + DiscreteMeasure.zero(fix2.space)


def _triple(seed):
    rng = np.random.default_rng(seed)
    form = random_form(rng, int(rng.integers(1, 12)))
    # integer masses keep the lattice identities exact
    ms = [DiscreteMeasure(form.space, rng.integers(-4, 5, form.n), rng.integers(-4, 5, form.n)) for _ in range(3)]
    return form, rng, ms


@given(st.integers(0, 2**32 - 1))
def test_lattice_laws(seed):
    _, _, (a, b, c) = _triple(seed)
    assert (a.sup(b) + a.inf(b)).allclose(a + b)
    assert a.sup(b).allclose(b.sup(a)) and a.inf(b).allclose(b.inf(a))
    assert a.sup(b.sup(c)).allclose(a.sup(b).sup(c))
    assert a.inf(b.inf(c)).allclose(a.inf(b).inf(c))
    assert a.sup(a.inf(b)).allclose(a) and a.inf(a.sup(b)).allclose(a)
    assert (a.pos - a.neg).allclose(a) and orthogonal(a.pos, a.neg)


@given(st.integers(0, 2**32 - 1))
def test_norms_and_potentials(seed):
    form, rng, (a, b, _) = _triple(seed)
    rho = rng.integers(1, 17, form.n) / 8  # dyadic weights keep the partition sum exact
    assert tv_norm(a + b, rho) <= tv_norm(a, rho) + tv_norm(b, rho) + 1e-12
    assert (tv_norm(a, rho) == 0) == a.is_zero()
    A = rng.choice(form.n, size=int(rng.integers(0, form.n + 1)), replace=False)
    Ac = np.setdiff1d(np.arange(form.n), A)
    assert tv_norm(a.restrict(A), rho) + tv_norm(a.restrict(Ac), rho) == pytest.approx(tv_norm(a, rho), abs=0)
    G = green(form)
    mu, nu = random_measure(rng, form.space), random_measure(rng, form.space)
    lhs = apply_green(G, mu + nu)
    assert np.abs(lhs - apply_green(G, mu) - apply_green(G, nu)).max() <= 1e-12 * max(1, np.abs(lhs).max())
    assert apply_green(G, mu.abs).min() >= 0
