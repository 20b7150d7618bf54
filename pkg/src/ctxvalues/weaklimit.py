"""Weak values, numerical ``g -> 0`` limits of conditioned averages, and the
audit of the sufficient conditions for that limit to be the generalized weak
value."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from . import cvsolve
from .cvsolve import (
    CalibrationError,
    GIndependentContextError,
    build_F,
    order_analysis,
    residual_tolerance,
    solve_exact,
    solve_fixed,
    solve_pinv,
)
from .gexpr import DEFAULT_G0, TaylorError, taylor_coeffs
from .matcore import commutator, polar_decompose, principal_sqrt
from .measurement import (
    COMPAT_RTOL,
    MeasurementContext,
    MeasurementError,
    Observable,
    PostSelection,
    State,
    conditioned_average,
    povm_at,
)
from .series import fit_laurent

WEAK_DENOM_ATOL = 1e-14
AGREEMENT_RTOL = 1e-7
POLE_RTOL = 1e-3
GENERATOR_RTOL = 1e-8


class WeakValueError(ValueError):
    pass


# --------------------------------------------------------------------------
# closed-form weak values

@dataclass
class WeakValueResult:
    value: float
    numerator: float
    denominator: float
    aav_complex: Optional[complex] = None


def generalized_weak_value(obs: Observable, state, post: PostSelection, psi_i=None, psi_f=None) -> WeakValueResult:
    """``tr(E_f (A rho + rho A)) / 2 tr(E_f rho)``.

    When the pure pre/post vectors are supplied the AAV quotient is attached
    as ``aav_complex``.
    """
    rho = state.rho if isinstance(state, State) else State(state).rho
    ef = post.effect
    a = obs.matrix
    den = float(np.trace(ef @ rho).real)
    if den <= WEAK_DENOM_ATOL:
        raise WeakValueError(f"post-selection orthogonal to the state (tr(E_f rho) = {den:.3e})")
    num = 0.5 * float(np.trace(ef @ (a @ rho + rho @ a)).real)
    aav = aav_weak_value(obs, psi_i, psi_f) if psi_i is not None and psi_f is not None else None
    return WeakValueResult(value=num / den, numerator=num, denominator=den, aav_complex=aav)


def aav_weak_value(obs: Observable, psi_i, psi_f) -> complex:
    """``<psi_f|A|psi_i> / <psi_f|psi_i>`` for unit vectors."""
    pi = np.asarray(psi_i, dtype=complex)
    pf = np.asarray(psi_f, dtype=complex)
    pi = pi / np.linalg.norm(pi)
    pf = pf / np.linalg.norm(pf)
    overlap = np.vdot(pf, pi)
    if abs(overlap) <= 1e-12:
        raise WeakValueError("pre- and post-selected states are orthogonal")
    return complex(np.vdot(pf, obs.matrix @ pi) / overlap)


# --------------------------------------------------------------------------
# limit extraction

@dataclass(frozen=True)
class GridSpec:
    g_min: float = 1e-4
    g_max: float = 1e-2
    points: int = 21

    def grid(self) -> np.ndarray:
        return np.geomspace(self.g_min, self.g_max, self.points)


@dataclass
class LimitEstimate:
    extrapolated_value: float
    g_grid: np.ndarray
    fitted_orders: np.ndarray
    convergence_flag: bool
    discrepancy_vs_eq2: float
    weak_value: float
    values: np.ndarray = field(repr=False, default=None)
    denominators: np.ndarray = field(repr=False, default=None)
    denominator_limit: float = float("nan")
    pole_order: int = 0
    pole_coefficients: Dict[int, float] = field(default_factory=dict)


CVMethod = Union[str, Callable[[float], np.ndarray]]


def contextual_values_at(ctx: MeasurementContext, obs: Observable, g: float, method: CVMethod = "pinv",
                         pins: Optional[Mapping] = None) -> np.ndarray:
    """Contextual values at one ``g`` by the named method or a callable."""
    if callable(method):
        return np.asarray(method(g), dtype=float)
    cal = build_F(obs, ctx, g)
    if method in ("pinv", cvsolve.PSEUDOINVERSE):
        return solve_pinv(cal).alphas
    if method in ("exact", cvsolve.EXACT):
        return solve_exact(cal).alphas
    if method in ("fixed", cvsolve.FIXED):
        if not pins:
            raise CalibrationError("fixed method needs pins")
        return solve_fixed(cal, pins).alphas
    raise ValueError(f"unknown contextual-value method {method!r}")


def _pole_terms(gs: np.ndarray, values: np.ndarray, degree: int):
    coeffs = fit_laurent(gs, values, -2, degree)
    scale = max(1.0, float(np.max(np.abs(values))))
    g_min = float(np.min(gs))
    order = 0
    for k in (1, 2):
        if abs(coeffs[-k]) * g_min ** (-k) > POLE_RTOL * scale:
            order = k
    return order, coeffs


def extrapolate(gs, values, degree: int = 3):
    """Constant term of a degree-``degree`` polynomial fit, plus the estimate
    from one degree higher for the agreement check."""
    c = fit_laurent(gs, values, 0, degree)
    c_hi = fit_laurent(gs, values, 0, degree + 1)
    return c, c_hi[0]


@dataclass
class Sample:
    g: float
    alphas: Optional[np.ndarray] = None
    result: Optional[object] = None
    error: Optional[str] = None


def sample_point(ctx: MeasurementContext, obs: Observable, g: float, cv_method: CVMethod, state: State,
                 post: PostSelection, pins: Optional[Mapping] = None) -> Sample:
    """Contextual values and conditioned average at one ``g``; failures are
    captured in ``Sample.error`` instead of raised."""
    try:
        alphas = contextual_values_at(ctx, obs, g, cv_method, pins)
        res = conditioned_average(ctx, g, alphas, state, post)
    except (ValueError, ArithmeticError) as exc:
        return Sample(g=g, error=f"{type(exc).__name__}: {exc}")
    return Sample(g=g, alphas=alphas, result=res)


def limit_from_samples(gs, values, denoms, weak_value: float, degree: int = 3) -> LimitEstimate:
    """Fit sampled conditioned averages and extrapolate to ``g = 0``.

    Samples are fitted to ``c_0 + c_1 g + ... + c_p g^p`` and ``c_0`` is the
    limit. A second fit with ``g^-1`` and ``g^-2`` terms detects divergence;
    a divergent sequence gets ``convergence_flag=False``, its pole order, and
    an infinite discrepancy.
    """
    gs = np.asarray(gs, dtype=float)
    values = np.asarray(values, dtype=float)
    denoms = np.asarray(denoms, dtype=float)
    coeffs, c0_hi = extrapolate(gs, values, degree)
    c0 = coeffs[0]
    order, laurent = _pole_terms(gs, values, degree)
    dcoeffs, _ = extrapolate(gs, denoms, degree)
    fitted = np.array([coeffs[k] for k in range(degree + 1)])
    if order:
        return LimitEstimate(
            extrapolated_value=laurent[0], g_grid=gs, fitted_orders=fitted, convergence_flag=False,
            discrepancy_vs_eq2=float("inf"), weak_value=weak_value, values=values, denominators=denoms,
            denominator_limit=dcoeffs[0], pole_order=order,
            pole_coefficients={k: laurent[k] for k in (-2, -1)},
        )
    agree = abs(c0 - c0_hi) <= AGREEMENT_RTOL * (1.0 + abs(c0))
    return LimitEstimate(
        extrapolated_value=c0, g_grid=gs, fitted_orders=fitted, convergence_flag=bool(agree),
        discrepancy_vs_eq2=abs(c0 - weak_value), weak_value=weak_value, values=values, denominators=denoms,
        denominator_limit=dcoeffs[0],
    )


def weak_limit(ctx: MeasurementContext, obs: Observable, cv_method: CVMethod, state, post: PostSelection,
               grid_spec: Optional[GridSpec] = None, pins: Optional[Mapping] = None, degree: int = 3) -> LimitEstimate:
    """Extrapolate the conditioned average to ``g = 0`` on a geometric grid
    (default 21 points from 1e-4 to 1e-2) and compare with the generalized
    weak value. See :func:`limit_from_samples` for the fit."""
    gs = (grid_spec or GridSpec()).grid()
    st = state if isinstance(state, State) else State(state)
    values = np.empty(len(gs))
    denoms = np.empty(len(gs))
    for i, g in enumerate(gs):
        alphas = contextual_values_at(ctx, obs, g, cv_method, pins)
        res = conditioned_average(ctx, g, alphas, st, post)
        values[i] = res.value
        denoms[i] = res.post_prob
    wv = generalized_weak_value(obs, st, post).value
    return limit_from_samples(gs, values, denoms, wv, degree)


# --------------------------------------------------------------------------
# sufficiency audit

PASS, FAIL, BORDERLINE, NA = "pass", "fail", "borderline", "n/a"


@dataclass
class Verdict:
    name: str
    status: str
    evidence: dict = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS


@dataclass
class AuditReport:
    cond_i_analytic: Verdict
    cond_ii_min_disturbance: Verdict
    cond_iii_identity: Verdict
    cond_iv_order: Verdict
    cond_v_compat: Verdict
    intermediates: dict = field(default_factory=dict, repr=False)

    @property
    def verdicts(self) -> List[Verdict]:
        return [self.cond_i_analytic, self.cond_ii_min_disturbance, self.cond_iii_identity,
                self.cond_iv_order, self.cond_v_compat]

    @property
    def overall(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def failing(self) -> List[str]:
        return [v.name for v in self.verdicts if not v.passed]

    def render(self) -> str:
        lines = []
        for v in self.verdicts:
            ev = ", ".join(f"{k}={_fmt(x)}" for k, x in v.evidence.items())
            line = f"{v.name:<22} {v.status.upper():<10} {ev}"
            if v.note:
                line += f"  [{v.note}]"
            lines.append(line)
        lines.append(f"{'overall':<22} {'PASS' if self.overall else 'FAIL'}")
        return "\n".join(lines)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{x:.3e}"
    if isinstance(x, np.ndarray):
        return "(" + ", ".join(f"{v:.6g}" for v in np.real_if_close(x).ravel()) + ")"
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], (float, np.floating)):
        return "(" + ", ".join(f"{v:.3e}" for v in x) + ")"
    return str(x)


def unitary_generator(u: np.ndarray, g: float) -> np.ndarray:
    """``G`` with ``u = exp(i g G)``, from the principal matrix logarithm."""
    d = u.shape[0]
    if np.linalg.norm(u - np.eye(d)) <= 1e-13:
        return np.zeros((d, d), dtype=complex)
    gen = scipy.linalg.logm(u) / (1j * g)
    return 0.5 * (gen + gen.conj().T)


def _audit_analytic(ctx: MeasurementContext, order: int, g0: float) -> Verdict:
    defects, probs, flagged, failures = [], [], [], []
    for j, op in enumerate(ctx.operators):
        try:
            c = taylor_coeffs(op, order, g0=g0)
        except (TaylorError, MeasurementError, ValueError) as exc:
            failures.append(f"M{j + 1}: {exc}")
            continue
        c0 = c[0]
        lam = np.trace(c0) / ctx.dim
        defects.append(float(np.linalg.norm(c0 - lam * np.eye(ctx.dim))))
        probs.append(float(abs(lam) ** 2))
        if op.non_polynomial_entries():
            flagged.append(j + 1)
    ev = {"identity_defect": max(defects) if defects else float("nan"), "p_min": min(probs) if probs else float("nan")}
    note = ""
    if flagged:
        note = "non-polynomial entries in outcomes " + ",".join(map(str, flagged))
    if failures:
        return Verdict("(i) analytic", FAIL, ev, "; ".join(failures))
    ok = ev["identity_defect"] <= 1e-9 and ev["p_min"] > 1e-12
    if not ok:
        note = (note + "; " if note else "") + "g=0 limit not proportional to identity"
    return Verdict("(i) analytic", PASS if ok else FAIL, ev, note)


def _audit_disturbance(ctx: MeasurementContext, rho: np.ndarray, gs: Sequence[float]) -> tuple:
    per_g = []
    generators = {}
    for g in gs:
        worst = 0.0
        ok = True
        for j, m in enumerate(ctx.operators_at(g)):
            gen = unitary_generator(polar_decompose(m).unitary, g)
            generators[(j, g)] = gen
            c = float(np.linalg.norm(commutator(gen, rho)))
            worst = max(worst, c)
            if c > GENERATOR_RTOL * (1.0 + float(np.linalg.norm(gen))):
                ok = False
        per_g.append((g, worst, ok))
    ev = {"max_commutator": max(w for _, w, _ in per_g), "g_sampled": [float(g) for g in gs]}
    flags = [ok for _, _, ok in per_g]
    if all(flags):
        return Verdict("(ii) min-disturbance", PASS, ev), generators
    if not any(flags):
        return Verdict("(ii) min-disturbance", FAIL, ev), generators
    return Verdict("(ii) min-disturbance", BORDERLINE, ev,
                   "generator commutes with rho at some sampled g only"), generators


def audit(ctx: MeasurementContext, obs: Observable, state, g_ref: float = DEFAULT_G0,
          g_small: float = 1e-4, max_order: int = 6) -> AuditReport:
    """Check the five sufficient conditions for the weak limit of the
    conditioned average to equal the generalized weak value.

    Always returns a report. Condition (ii) is sampled at ``g_small`` and
    ``g_ref``; a verdict that differs between them is reported as borderline,
    which does not count as a pass.
    """
    st = state if isinstance(state, State) else State(state)
    rho = st.rho
    intermediates: dict = {}

    cond_i = _audit_analytic(ctx, min(max_order, 2), g_ref)
    cond_ii, generators = _audit_disturbance(ctx, rho, [g_small, g_ref])
    intermediates["generators"] = generators

    try:
        effects = povm_at(ctx, g_ref)
        intermediates["rho_prime"] = [principal_sqrt(e) @ rho @ principal_sqrt(e) for e in effects]
    except (MeasurementError, ValueError):
        effects = None

    # (v) compatibility on the validity sample
    worst_e, worst_m = 0.0, 0.0
    compat_ok = True
    a = obs.matrix
    na = float(np.linalg.norm(a))
    try:
        for g in list(ctx.sample_grid()) + [g_ref]:
            ops = ctx.operators_at(g)
            for m, e in zip(ops, povm_at(ctx, g)):
                ce = float(np.linalg.norm(commutator(a, e)))
                worst_e = max(worst_e, ce)
                worst_m = max(worst_m, float(np.linalg.norm(commutator(a, m))))
                if ce > max(COMPAT_RTOL * na * float(np.linalg.norm(e)), 1e-12):
                    compat_ok = False
        cond_v = Verdict("(v) compatibility", PASS if compat_ok else FAIL,
                         {"max_[A,E]": worst_e, "max_[A,M]": worst_m})
    except MeasurementError as exc:
        cond_v = Verdict("(v) compatibility", FAIL, {}, str(exc))

    # (iii) pseudoinverse solution of the identity at finite g
    try:
        cv = solve_pinv(build_F(obs, ctx, g_ref))
        tol = residual_tolerance(obs.eigenvalues)
        cond_iii = Verdict("(iii) identity", PASS if cv.residual <= tol else FAIL,
                           {"residual": cv.residual, "method": cv.method, "g": g_ref})
    except (MeasurementError, CalibrationError) as exc:
        cond_iii = Verdict("(iii) identity", FAIL, {}, str(exc))

    # (iv) minimal nonzero order
    try:
        oa = order_analysis(obs, ctx, max_order=max_order, g_ref=g_ref)
        intermediates["order_analysis"] = oa
        cond_iv = Verdict(
            "(iv) order", PASS if oa.solvable_at_order_n else FAIL,
            {"n": oa.n, "residual": oa.residual_at_order_n, "F'F'^+a": oa.reconstruction},
        )
    except GIndependentContextError:
        cond_iv = Verdict("(iv) order", NA, {"n": "undefined"}, "g-independent context")
    except (TaylorError, MeasurementError, CalibrationError) as exc:
        cond_iv = Verdict("(iv) order", FAIL, {}, str(exc))

    return AuditReport(cond_i, cond_ii, cond_iii, cond_iv, cond_v, intermediates)
