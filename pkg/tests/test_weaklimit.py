import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import PLUS, ce1_setup, post_vector, random_effect, random_state, random_unit
from ctxvalues import scenarios
from ctxvalues.gexpr import GMatrixFn, parse
from ctxvalues.measurement import MeasurementContext, Observable, PostSelection, State
from ctxvalues.weaklimit import (
    BORDERLINE,
    FAIL,
    NA,
    PASS,
    GridSpec,
    WeakValueError,
    aav_weak_value,
    audit,
    generalized_weak_value,
    limit_from_samples,
    sample_point,
    unitary_generator,
    weak_limit,
)

SZ = Observable(np.diag([1.0, -1.0]))


def test_weak_value_eigenstate():
    rho = np.diag([1.0, 0.0])
    post = PostSelection(np.array([[0.3, 0.2], [0.2, 0.5]]))
    assert generalized_weak_value(SZ, rho, post).value == pytest.approx(1.0)


def test_weak_value_identity_post(rng):
    rho = random_state(rng, 2)
    wv = generalized_weak_value(SZ, rho, PostSelection.identity(2))
    assert wv.value == pytest.approx(np.trace(rho @ SZ.matrix).real)


def test_weak_value_half_angle():
    f = post_vector(0.5)
    wv = generalized_weak_value(SZ, State.pure(PLUS), PostSelection.pure(f), psi_i=PLUS, psi_f=f)
    assert wv.value == pytest.approx(1 / 3, abs=1e-14)
    assert wv.aav_complex == pytest.approx(1 / 3, abs=1e-14)
    assert wv.value == pytest.approx(wv.numerator / wv.denominator)


def test_aav_examples():
    assert aav_weak_value(SZ, [1, 0], [1, 0]) == pytest.approx(1.0)
    assert aav_weak_value(SZ, PLUS, post_vector(3.0)) == pytest.approx(-0.5)
    val = aav_weak_value(SZ, PLUS, post_vector(-2.0))
    assert val == pytest.approx(-3.0)
    assert abs(val) > 1
    f = np.array([1, 1j]) / np.sqrt(2)
    # <f|Z|+> = (1 + i)/2 and <f|+> = (1 - i)/2
    assert aav_weak_value(SZ, PLUS, f) == pytest.approx(1j)


def test_orthogonal_post_raises():
    with pytest.raises(WeakValueError):
        generalized_weak_value(SZ, np.diag([1.0, 0.0]), PostSelection.pure([0.0, 1.0]))
    with pytest.raises(WeakValueError):
        aav_weak_value(SZ, [1, 0], [0, 1])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_pure_state_reduction(seed, d):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    obs = Observable(h + h.conj().T)
    psi_i, psi_f = random_unit(rng, d), random_unit(rng, d)
    if abs(np.vdot(psi_f, psi_i)) < 1e-3:
        return
    wv = generalized_weak_value(obs, State.pure(psi_i), PostSelection.pure(psi_f))
    assert wv.value == pytest.approx(aav_weak_value(obs, psi_i, psi_f).real, abs=1e-10 * max(1, abs(wv.value)))


def test_grid_spec_default():
    gs = GridSpec().grid()
    assert len(gs) == 21 and gs[0] == pytest.approx(1e-4) and gs[-1] == pytest.approx(1e-2)


def test_weak_limit_ce1_pinv(ce1, plus_state, half_post):
    ctx, obs = ce1
    est = weak_limit(ctx, obs, "pinv", plus_state, half_post)
    assert est.convergence_flag
    assert est.extrapolated_value == pytest.approx(1 / 3, abs=1e-6)
    assert est.discrepancy_vs_eq2 <= 1e-6
    assert est.denominator_limit == pytest.approx(0.9, abs=1e-8)


def test_weak_limit_ce1_pinned_context_dependent(plus_state, half_post):
    ctx, obs = ce1_setup()
    est = weak_limit(ctx, obs, "fixed", plus_state, half_post, pins={0: parse("1/g^2")})
    assert est.discrepancy_vs_eq2 > 0.01


def test_weak_limit_ce2_exact():
    ctx, obs = scenarios.ce2().to_context(), scenarios.ce2().get_observable()
    psi = np.ones(3) / np.sqrt(3)
    f = np.array([1.0, 2.0, 2.0]) / 3
    est = weak_limit(ctx, obs, "exact", State.pure(psi), PostSelection.pure(f))
    assert est.discrepancy_vs_eq2 > 0.01


def test_denominator_limit(rng, ce1):
    ctx, obs = ce1
    for _ in range(5):
        rho, ef = random_state(rng, 2), random_effect(rng, 2)
        est = weak_limit(ctx, obs, "pinv", rho, PostSelection(ef))
        assert est.denominator_limit == pytest.approx(np.trace(ef @ rho).real, abs=1e-8)


def test_divergent_samples_flagged():
    gs = GridSpec().grid()
    est = limit_from_samples(gs, 0.5 / gs + 2.0, np.ones_like(gs), 2.0)
    assert not est.convergence_flag
    assert est.pole_order == 1
    est = limit_from_samples(gs, 1e-3 / gs**2 - 1.0, np.ones_like(gs), 0.0)
    assert est.pole_order == 2 and not est.convergence_flag


def test_convergent_samples():
    gs = GridSpec().grid()
    est = limit_from_samples(gs, 0.25 - 3 * gs + 7 * gs**2, np.ones_like(gs), 0.25)
    assert est.convergence_flag and est.pole_order == 0
    assert est.discrepancy_vs_eq2 <= 1e-10


def test_sample_point_captures_error(ce1, plus_state):
    ctx, obs = ce1
    # at g = 0 every operator is proportional to the identity, so |-> stays orthogonal to |+>
    s = sample_point(ctx, obs, 0.0, "pinv", plus_state, PostSelection.pure(np.array([1, -1]) / np.sqrt(2)))
    assert s.error is not None and "NullPostSelection" in s.error
    s = sample_point(ctx, obs, 0.1, "exact", plus_state, PostSelection.identity(2))
    assert s.error is not None and s.alphas is None


def test_unitary_generator_round_trip():
    g = 0.01
    G = np.array([[0.3, 0.1 - 0.2j], [0.1 + 0.2j, -0.5]])
    w, v = np.linalg.eigh(G)
    u = v @ np.diag(np.exp(1j * g * w)) @ v.conj().T
    np.testing.assert_allclose(unitary_generator(u, g), G, atol=1e-10)
    assert not unitary_generator(np.eye(2), g).any()


def test_audit_ce1_passes(ce1, rng):
    ctx, obs = ce1
    for _ in range(3):
        rho = np.diag(rng.dirichlet([1, 1]))
        report = audit(ctx, obs, rho)
        assert report.overall, report.render()
        assert report.cond_iv_order.evidence["n"] == 1


def test_audit_ce2_fails_only_iv(ce2):
    ctx, obs = ce2
    report = audit(ctx, obs, State.maximally_mixed(3))
    assert not report.overall
    assert report.failing() == ["(iv) order"]
    np.testing.assert_allclose(report.cond_iv_order.evidence["F'F'^+a"], [0.5, 0, 0.5], atol=1e-12)
    assert "non-polynomial" in report.cond_i_analytic.note
    assert "order_analysis" in report.intermediates and "rho_prime" in report.intermediates


def test_audit_projective_g_independent():
    cf = scenarios.projective()
    report = audit(cf.to_context(), cf.get_observable(), cf.get_state())
    assert report.cond_iv_order.status == NA
    assert "g-independent" in report.cond_iv_order.note
    assert report.cond_iii_identity.status == PASS


def test_audit_borderline_disturbance():
    # a rotation that vanishes at g = 1e-2 but not at 1e-4
    s = "(10*g*(g - 0.01))"
    c = f"sqrt(1 - {s}^2)"
    m1 = GMatrixFn.from_strings([[f"sqrt(1/2)*{c}", f"-sqrt(1/2)*{s}"], [f"sqrt(1/2)*{s}", f"sqrt(1/2)*{c}"]],
                                validity=(0, 0.05))
    m2 = GMatrixFn.from_strings([["sqrt(1/2)", "0"], ["0", "sqrt(1/2)"]], validity=(0, 0.05))
    ctx = MeasurementContext([m1, m2])
    report = audit(ctx, Observable(np.eye(2)), np.diag([1.0, 0.0]))
    assert report.cond_ii_min_disturbance.status == BORDERLINE
    assert not report.overall
    report = audit(ctx, Observable(np.eye(2)), np.eye(2) / 2)
    assert report.cond_ii_min_disturbance.status == PASS


def test_audit_disturbing_context_fails():
    s = "g"
    c = "sqrt(1 - g^2)"
    m1 = GMatrixFn.from_strings([[f"sqrt(1/2)*{c}", f"-sqrt(1/2)*{s}"], [f"sqrt(1/2)*{s}", f"sqrt(1/2)*{c}"]],
                                validity=(0, 0.5))
    m2 = GMatrixFn.from_strings([["sqrt(1/2)", "0"], ["0", "sqrt(1/2)"]], validity=(0, 0.5))
    report = audit(MeasurementContext([m1, m2]), Observable(np.eye(2)), np.diag([1.0, 0.0]))
    assert report.cond_ii_min_disturbance.status == FAIL


def test_render_lists_all_conditions(ce2):
    ctx, obs = ce2
    text = audit(ctx, obs, State.maximally_mixed(3)).render()
    for key in ("(i)", "(ii)", "(iii)", "(iv)", "(v)", "overall"):
        assert key in text
