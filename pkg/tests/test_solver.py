import numpy as np
import pytest
from hypothesis import given, strategies as st

from reduced_lab.errors import SolverError, ValidationError
from reduced_lab.measures import DiscreteMeasure
from reduced_lab.nonlinearity import bounded, exponential, expression, power, truncate_below
from reduced_lab.solver import (
    apriori_check, certify_maximal, existence_from_sub_super, max_of_subsolutions, minimal_between,
    natural_bracket, potential, residual_measure, solve, solve_between, solve_fixed_point,
)
from reduced_lab.suite import random_form, random_measure, scaled_to

from oracles import brute_fixed_point, scalar_root

CUBIC = power(3)
LINEAR = power(1)


def _mu3(form):
    return DiscreteMeasure.atom(form.space, 0, 3.0)


def test_picard_examples(fix1):
    mu = _mu3(fix1)
    rep = solve_fixed_point(fix1, expression("0*y"), mu)
    assert rep.u[0] == pytest.approx(1.5, abs=1e-15) and rep.iterations == 1
    rep = solve_fixed_point(fix1, bounded(1.0), mu)
    ref = scalar_root(lambda u: 2 * u + np.tanh(u) - 3, 0, 3)
    assert rep.u[0] == pytest.approx(ref, abs=1e-9) and rep.u[0] == pytest.approx(1.0998, abs=1e-4)
    assert solve_fixed_point(fix1, LINEAR, mu).u[0] == pytest.approx(1.0, abs=1e-9)
    assert rep.method == "picard" and rep.apriori_ok


def test_picard_cap_carries_best_iterate(fix1):
    with pytest.raises(SolverError) as err:
        solve_fixed_point(fix1, bounded(1.0), _mu3(fix1), max_iter=2)
    assert err.value.best is not None and err.value.residual > 0
    with pytest.raises(ValidationError):
        solve_fixed_point(fix1, LINEAR, _mu3(fix1), theta=0)


def test_residual_examples(fix1):
    mu = _mu3(fix1)
    rd = residual_measure(fix1, CUBIC, [0.0], mu)
    assert rd.classification == "subsolution" and rd.nu.total[0] == 3
    rd = residual_measure(fix1, CUBIC, [1.5], mu)
    assert rd.classification == "supersolution" and rd.nu.total[0] == pytest.approx(-3.375)
    rd = residual_measure(fix1, CUBIC, [1.0], mu)
    assert rd.classification == "solution" and rd.is_sub and rd.is_super


def test_solve_between_examples(fix1):
    mu = _mu3(fix1)
    rep = solve_between(fix1, LINEAR, mu, [0.0], [1.5], newton=False)
    assert rep.u[0] == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.diff([1.5] + [1.5 - sum(rep.history[:k + 1]) for k in range(len(rep.history))]) <= 0)
    rep = solve_between(fix1, CUBIC, mu, [0.0], [1.5])
    assert rep.u[0] == pytest.approx(1.0, abs=1e-12) and rep.method == "monotone_from_above"
    rep = solve_between(fix1, CUBIC, mu, [1.0], [1.0])
    assert rep.u[0] == 1.0 and rep.iterations == 1


def test_solve_between_preconditions(fix1):
    mu = _mu3(fix1)
    with pytest.raises(ValidationError, match="bracket violation"):
        solve_between(fix1, CUBIC, mu, [2.0], [1.0])
    with pytest.raises(ValidationError, match="not a subsolution"):
        solve_between(fix1, CUBIC, mu, [1.2], [1.5])
    with pytest.raises(ValidationError, match="not a supersolution"):
        solve_between(fix1, CUBIC, mu, [0.0], [0.5])


def test_minimal_solution_with_two_roots(fix1):
    # f(y) = y^2 - 3y has roots of 2u = u^2 - 3u + 1 at u = (5 -+ sqrt 21)/2
    f = expression("y**2 - 3*y")
    lo_root, hi_root = (5 - np.sqrt(21)) / 2, (5 + np.sqrt(21)) / 2
    mu = DiscreteMeasure.atom(fix1.space, 0, 1.0)
    assert minimal_between(fix1, f, mu, [0.0], [4.0]).u[0] == pytest.approx(lo_root, abs=1e-9)
    assert solve_between(fix1, f, mu, [0.0], [hi_root]).u[0] == pytest.approx(hi_root, abs=1e-9)


def test_max_of_subsolutions_examples(fix1):
    mu = _mu3(fix1)
    out, rd = max_of_subsolutions(fix1, CUBIC, mu, [0.0], [-1.0])
    assert out[0] == 0 and rd.nu.total[0] == 3
    out, _ = max_of_subsolutions(fix1, CUBIC, mu, [0.5], [0.5])
    assert out[0] == 0.5
    with pytest.raises(ValidationError):
        max_of_subsolutions(fix1, CUBIC, mu, [1.5], [0.0])


def test_existence_from_unordered_pair(fix1):
    mu = _mu3(fix1)
    assert residual_measure(fix1, CUBIC, [-5.0], mu).is_sub
    assert residual_measure(fix1, CUBIC, [10.0], mu).is_super
    rep = existence_from_sub_super(fix1, CUBIC, mu, [-5.0], [10.0])
    assert rep.u[0] == pytest.approx(1.0, abs=1e-10)
    ordered = existence_from_sub_super(fix1, CUBIC, mu, [0.0], [1.5])
    assert ordered.u[0] == pytest.approx(solve_between(fix1, CUBIC, mu, [0.0], [1.5]).u[0], abs=1e-10)


def test_certify_maximal(fix2):
    mu = DiscreteMeasure.atom(fix2.space, 0, 3.0)
    rep = solve(fix2, CUBIC, mu)
    _, hi = natural_bracket(fix2, mu)
    assert certify_maximal(fix2, CUBIC, mu, rep.u, hi, known=[rep.u - 0.1])
    assert not certify_maximal(fix2, CUBIC, mu, rep.u, hi, known=[rep.u + 0.1])


def test_report_csv(tmp_path, fix2):
    rep = solve(fix2, CUBIC, DiscreteMeasure.atom(fix2.space, 0, 3.0))
    path = tmp_path / "s.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# schema: node,u,f_of_u,Rmu,residual" and lines[2] == "node,u,f_of_u,Rmu,residual"
    assert len(lines) == 5


seeds = st.integers(0, 2**32 - 1)


def _instance(seed, max_n=32, box=2.0):
    rng = np.random.default_rng(seed)
    form = random_form(rng, int(rng.integers(1, max_n + 1)))
    mu = scaled_to(form, random_measure(rng, form.space), rng.uniform(0.1, box))
    return rng, form, mu


@given(seeds, st.sampled_from(["cubic", "exp"]))
def test_apriori_and_barrier(seed, family):
    rng, form, mu = _instance(seed)
    f = CUBIC if family == "cubic" else exponential()
    rep = solve(form, f, mu)
    assert rep.final_residual <= 1e-10 and apriori_check(form, f, rep.u, mu)
    _, upper = natural_bracket(form, mu)
    for _ in range(5):
        cand = rep.u - np.abs(rng.normal(0, 0.5, form.n))
        if residual_measure(form, f, cand, mu).is_sub:
            assert np.all(cand <= upper + 1e-10)


@given(seeds)
def test_comparison_of_maximal_solutions(seed):
    rng, form, mu1 = _instance(seed)
    mu2 = mu1 + DiscreteMeasure(form.space, np.abs(rng.normal(0, 0.3, form.n)) * form.m)
    f1 = CUBIC
    f2 = truncate_below(CUBIC, rng.uniform(0.5, 4), np.ones(form.n))
    u1, u2 = solve(form, f1, mu1).u, solve(form, f2, mu2).u
    assert np.all(u1 <= u2 + 1e-8)


@given(seeds)
def test_max_of_random_subsolutions_recertifies(seed):
    rng = np.random.default_rng(seed)
    form = random_form(rng, 16)
    mu = scaled_to(form, random_measure(rng, form.space), 1.5)
    u = solve(form, CUBIC, mu).u
    lo, _ = natural_bracket(form, mu)
    subs = [v for v in (np.maximum(lo, u - np.abs(rng.normal(0, 0.4, 16))) for _ in range(6))
            if residual_measure(form, CUBIC, v, mu).is_sub]
    subs.append(lo)
    a, b = subs[0], subs[-1]
    out, rd = max_of_subsolutions(form, CUBIC, mu, a, b)
    assert rd.is_sub and np.array_equal(out, np.maximum(a, b))


@given(seeds)
def test_picard_agrees_with_monotone(seed):
    _, form, mu = _instance(seed, max_n=12, box=1.0)
    f = bounded(1.0)
    # the damped map contracts when theta (1 + L) < 2, L = spectral radius of R m |f'|
    L = float(np.abs(np.linalg.eigvals(np.linalg.inv(form.B) * form.m)).max())
    rep = solve_fixed_point(form, f, mu, theta=2 / (2 + L))
    assert np.abs(rep.u - solve(form, f, mu).u).max() <= 1e-8


@pytest.mark.parametrize("f", [CUBIC, exponential()], ids=["cubic", "exp"])
def test_brute_force_oracle_small(rng, f):
    for _ in range(10):
        form = random_form(rng, int(rng.integers(1, 4)))
        mu = scaled_to(form, random_measure(rng, form.space), 1.5)
        rep = solve(form, f, mu)
        u_ref, res = brute_fixed_point(form.B, form.m, lambda i, y: float(f.func(i, y)), mu.total)
        assert res <= 1e-12
        assert np.abs(rep.u - u_ref).max() <= 1e-6


def test_potential_matches_green(fix2):
    np.testing.assert_allclose(potential(fix2, [3.0, 0.0]), [2, 1], atol=1e-14)
