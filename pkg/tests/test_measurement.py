import numpy as np
import pytest

from conftest import PLUS, ce1_setup, post_vector, random_effect, random_state
from ctxvalues import scenarios
from ctxvalues.cvsolve import build_F, solve_pinv
from ctxvalues.gexpr import GMatrixFn
from ctxvalues.measurement import (
    ImpossibleOutcomeError,
    IncompatibleContextError,
    InvalidStateError,
    MeasurementContext,
    MeasurementError,
    NullPostSelectionError,
    Observable,
    POVMCompletenessError,
    PostSelection,
    State,
    conditioned_average,
    cv_moment,
    expectation,
    outcome_probs,
    povm_at,
    state_update,
)


def _projective(values):
    cf = scenarios.projective([str(v) for v in values])
    return cf.to_context(), cf.get_observable()


def test_observable_spectrum():
    obs = Observable(np.diag([2.0, -1.0, 2.0]))
    assert list(obs.eigenvalues) == [-1.0, 2.0]
    np.testing.assert_allclose(sum(a * p for a, p in obs.spectrum), obs.matrix)


def test_state_validation():
    with pytest.raises(InvalidStateError):
        State(np.diag([0.7, 0.7]))
    with pytest.raises(MeasurementError):
        State(np.diag([1.2, -0.2]))
    assert State.maximally_mixed(3).rho.trace().real == pytest.approx(1.0)


def test_post_selection_bounds():
    with pytest.raises(MeasurementError):
        PostSelection(np.diag([1.5, 0.0]))
    PostSelection.identity(2)


def test_povm_ce1(ce1):
    ctx, _ = ce1
    e = povm_at(ctx, 0.1)
    np.testing.assert_allclose(e[0], np.diag([0.36, 0.16]), atol=1e-15)
    np.testing.assert_allclose(e[1], np.diag([0.16, 0.36]), atol=1e-15)
    np.testing.assert_allclose(e[2], 0.48 * np.eye(2), atol=1e-15)
    e0 = povm_at(ctx, 0.0)
    for got, want in zip(e0, (0.25, 0.25, 0.5)):
        np.testing.assert_allclose(got, want * np.eye(2))


def test_povm_ce2_complete(ce2):
    ctx, _ = ce2
    e = povm_at(ctx, 0.1)
    assert np.linalg.norm(e.sum(axis=0) - np.eye(3)) <= 1e-12
    for ej in e:
        assert np.count_nonzero(ej - np.diag(np.diag(ej))) == 0


def test_completeness_violation_rejected():
    with pytest.raises(POVMCompletenessError) as info:
        scenarios.ce2_typo().to_context()
    assert info.value.defect > 1e-3


def test_outcome_probs_ce1(ce1):
    ctx, _ = ce1
    np.testing.assert_allclose(outcome_probs(ctx, 0.1, State.maximally_mixed(2)), [0.26, 0.26, 0.48])
    np.testing.assert_allclose(outcome_probs(ctx, 0.1, np.diag([1.0, 0.0])), [0.36, 0.16, 0.48])
    np.testing.assert_allclose(outcome_probs(ctx, 0.0, State.pure(PLUS)), [0.25, 0.25, 0.5])


def test_outcome_probs_sum_to_one(ce2, rng):
    ctx, _ = ce2
    for _ in range(20):
        p = outcome_probs(ctx, 0.07, random_state(rng, 3))
        assert p.min() >= 0 and abs(p.sum() - 1) <= 1e-12


def test_state_update_projective():
    ctx, _ = _projective([1, -1])
    rho = np.array([[0.6, 0.2], [0.2, 0.4]])
    new = state_update(ctx, 0.0, rho, 0)
    np.testing.assert_allclose(new.rho, np.diag([1.0, 0.0]))
    with pytest.raises(ImpossibleOutcomeError):
        state_update(ctx, 0.0, np.diag([0.0, 1.0]), 0)


def test_state_update_ce1(ce1):
    ctx, _ = ce1
    w = np.array([0.3 * 0.16, 0.7 * 0.36])
    np.testing.assert_allclose(state_update(ctx, 0.1, np.diag([0.3, 0.7]), 1).rho, np.diag(w / w.sum()), atol=1e-15)
    new = state_update(ctx, 0.1, State.pure(PLUS), 0).rho
    v = np.diag([0.6, 0.4]) @ PLUS
    np.testing.assert_allclose(new, np.outer(v, v) / (v @ v), atol=1e-14)
    assert np.linalg.matrix_rank(new) == 1


def test_expectation_examples():
    assert expectation(Observable(np.diag([1.0, -1.0])), np.diag([0.8, 0.2])) == pytest.approx(0.6)
    assert expectation(Observable(np.eye(3)), State.maximally_mixed(3)) == pytest.approx(1.0)
    assert expectation(Observable(np.diag([1.0, -1.0])), State.pure(PLUS)) == pytest.approx(0.0, abs=1e-15)


def test_moment_projective():
    ctx, obs = _projective([2, -1, 0.5])
    cv = solve_pinv(build_F(obs, ctx, 0.0))
    rho = np.diag([0.2, 0.5, 0.3])
    for n in range(1, 5):
        want = 0.2 * 2.0**n + 0.5 * (-1.0) ** n + 0.3 * 0.5**n
        assert cv_moment(ctx, 0.0, cv, rho, n) == pytest.approx(want, rel=1e-12)


def test_moment_ce1_second(ce1):
    ctx, obs = ce1
    cv = solve_pinv(build_F(obs, ctx, 0.1))
    assert cv_moment(ctx, 0.1, cv, np.diag([0.7, 0.3]), 2) == pytest.approx(1.0, abs=1e-10)
    assert cv_moment(ctx, 0.1, cv, np.diag([0.7, 0.3]), 1) == pytest.approx(0.4, abs=1e-12)


def test_moment_limits(ce1):
    ctx, obs = ce1
    cv = solve_pinv(build_F(obs, ctx, 0.1))
    with pytest.raises(ValueError):
        cv_moment(ctx, 0.1, cv, np.eye(2) / 2, 5)


def test_moment_requires_compatibility():
    u = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    ops = [GMatrixFn.constant(np.sqrt(0.5) * np.eye(2)), GMatrixFn.constant(np.sqrt(0.5) * u)]
    ctx = MeasurementContext(ops)
    with pytest.raises(IncompatibleContextError) as info:
        cv_moment(ctx, 0.0, np.array([1.0, -1.0]), np.eye(2) / 2, 1, obs=Observable(np.diag([1.0, -1.0])))
    assert max(info.value.norms) > 0.1


def test_identity_post_collapse(ce1, rng):
    ctx, obs = ce1
    for g in (0.3, 0.1, 1e-3):
        cv = solve_pinv(build_F(obs, ctx, g))
        rho = random_state(rng, 2)
        res = conditioned_average(ctx, g, cv, rho, PostSelection.identity(2))
        assert res.value == pytest.approx(expectation(obs, rho), abs=1e-12)


def test_conditioned_average_fields(ce2, rng):
    ctx, obs = ce2
    from ctxvalues.cvsolve import solve_exact

    cv = solve_exact(build_F(obs, ctx, 0.05))
    res = conditioned_average(ctx, 0.05, cv, random_state(rng, 3), PostSelection(random_effect(rng, 3)))
    assert res.cond_probs.min() >= 0
    assert abs(res.cond_probs.sum() - 1) <= 1e-12
    assert res.value == pytest.approx(float(cv.alphas @ res.cond_probs))
    assert res.post_prob == pytest.approx(res.joint_unnormalized.sum())


def test_conditioned_average_projective_abl():
    ctx, obs = _projective([1, -1])
    cv = solve_pinv(build_F(obs, ctx, 0.0))
    rho = np.array([[0.6, 0.3], [0.3, 0.4]])
    f = np.array([np.cos(0.3), np.sin(0.3)])
    res = conditioned_average(ctx, 0.0, cv, rho, PostSelection.pure(f))
    w = np.array([0.6 * f[0] ** 2, 0.4 * f[1] ** 2])
    assert res.value == pytest.approx((w[0] - w[1]) / w.sum(), rel=1e-12)


def test_conditioned_average_weak_regime(ce1):
    ctx, obs = ce1
    cv = solve_pinv(build_F(obs, ctx, 1e-3))
    res = conditioned_average(ctx, 1e-3, cv, State.pure(PLUS), PostSelection.pure(post_vector(0.5)))
    assert res.value == pytest.approx(1 / 3, abs=1e-4)


def test_null_post_selection(ce1):
    ctx, obs = _projective([1, -1])
    with pytest.raises(NullPostSelectionError) as info:
        conditioned_average(ctx, 0.0, [1.0, -1.0], np.diag([1.0, 0.0]), PostSelection.pure([0.0, 1.0]))
    assert info.value.denominator <= 1e-14


def test_unbiased_estimator(rng):
    for a, b in ((1, -1), (2, 3)):
        ctx, obs = ce1_setup(a, b)
        cv = solve_pinv(build_F(obs, ctx, 0.05))
        for _ in range(25):
            rho = random_state(rng, 2)
            p = outcome_probs(ctx, 0.05, rho)
            assert cv.alphas @ p == pytest.approx(expectation(obs, rho), abs=1e-10)
