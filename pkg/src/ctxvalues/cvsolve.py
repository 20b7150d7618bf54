"""Contextual values: calibrate detector outcomes against an observable.

The operator identity ``A = sum_j alpha_j E_j`` is reduced, for a context
whose POVM commutes with ``A``, to the real linear system ``F alpha = a`` with
``F_kj = tr(Pi_k E_j)``, ``Pi_k = |k><k|`` running over a joint eigenbasis.
The prescribed solution is the minimum-norm one,
``alpha = F^+ a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .gexpr import MAX_TAYLOR_ORDER, DEFAULT_G0, GExpr, parse, product_series, taylor_coeffs
from .matcore import pseudoinverse, svd
from .measurement import COMPAT_RTOL, IncompatibleContextError, MeasurementContext, Observable, povm_at
from .series import fit_laurent, pole_order_slope

PSEUDOINVERSE = "pseudoinverse"
FIXED = "fixed_component"
EXACT = "exact_inverse"

RELEVANT_RTOL = 1e-10


def residual_tolerance(a: np.ndarray) -> float:
    return 1e-9 * (1.0 + float(np.linalg.norm(a)))


class CalibrationError(ValueError):
    pass


class InconsistentPinsError(CalibrationError):
    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"pinned system is inconsistent (residual {residual:.3e})")


class GIndependentContextError(CalibrationError):
    pass


@dataclass
class CalibrationMatrix:
    """``F_kj = <k|E_j|k>`` over a joint eigenbasis ``{|k>}`` of ``A`` and the POVM.

    Row ``k`` is one basis vector (a "diagonal slot"), so ``F`` is ``N x M``
    with ``N`` the system dimension and ``eigenvalue_vec[k] = <k|A|k>``.
    """

    F: np.ndarray
    eigenvalue_vec: np.ndarray
    g: float
    basis: np.ndarray = field(repr=False, default=None)
    effects: Optional[np.ndarray] = field(default=None, repr=False)
    observable: Optional[Observable] = field(default=None, repr=False)

    @property
    def target(self) -> np.ndarray:
        return self.eigenvalue_vec


@dataclass
class ContextualValues:
    alphas: np.ndarray
    method: str
    residual: float
    g: float
    observable: Optional[Observable] = field(default=None, repr=False)
    operator_residual: Optional[float] = None

    @property
    def norm_sq(self) -> float:
        return float(self.alphas @ self.alphas)


def _offdiag(m: np.ndarray) -> float:
    return float(np.linalg.norm(m - np.diag(np.diag(m))))


def joint_eigenbasis(obs: Observable, effects: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) diagonalising ``A`` and every ``E_j``.

    Diagonal inputs keep the standard basis so rows follow the matrix
    slots; otherwise a fixed generic combination is diagonalised.
    """
    d = obs.dim
    mats = [obs.matrix, *effects]
    scale = max(float(np.linalg.norm(m)) for m in mats) or 1.0
    if all(_offdiag(m) <= 1e-12 * scale for m in mats):
        return np.eye(d, dtype=complex)
    weights = np.sqrt(np.arange(2, len(mats) + 2, dtype=float))
    combo = sum(w * m for w, m in zip(weights, mats))
    _, vecs = np.linalg.eigh(0.5 * (combo + combo.conj().T))
    return vecs


def build_F(obs: Observable, ctx_or_effects, g: float = float("nan")) -> CalibrationMatrix:
    """Assemble the calibration matrix at ``g``.

    ``ctx_or_effects`` may be a :class:`MeasurementContext` or an explicit
    stack of POVM elements (used for truncated expansions). Every POVM
    element must commute with the observable.
    """
    if isinstance(ctx_or_effects, MeasurementContext):
        effects = povm_at(ctx_or_effects, g)
    else:
        effects = np.asarray(ctx_or_effects, dtype=complex)
    a = obs.matrix
    na = np.linalg.norm(a)
    norms = [float(np.linalg.norm(a @ e - e @ a)) for e in effects]
    if any(c > COMPAT_RTOL * max(na * np.linalg.norm(e), 1e-300) and c > 1e-12 for c, e in zip(norms, effects)):
        raise IncompatibleContextError(norms, symbol="E_j")
    basis = joint_eigenbasis(obs, effects)
    bh = basis.conj().T
    F = np.array([np.diag(bh @ e @ basis).real for e in effects]).T
    avec = np.diag(bh @ a @ basis).real.copy()
    return CalibrationMatrix(F=F, eigenvalue_vec=avec, g=g, basis=basis, effects=effects, observable=obs)


def _finish(cal: CalibrationMatrix, alphas: np.ndarray, method: str) -> ContextualValues:
    res = float(np.linalg.norm(cal.F @ alphas - cal.target))
    op_res = None
    if cal.effects is not None and cal.observable is not None:
        op_res = float(np.linalg.norm(np.tensordot(alphas, cal.effects, axes=1) - cal.observable.matrix))
    return ContextualValues(alphas=alphas, method=method, residual=res, g=cal.g,
                            observable=cal.observable, operator_residual=op_res)


def solve_pinv(cal: CalibrationMatrix, rtol: Optional[float] = None) -> ContextualValues:
    """Minimum-norm least-squares contextual values ``F^+ a``."""
    alphas = pseudoinverse(cal.F, rtol) @ cal.target
    return _finish(cal, alphas, PSEUDOINVERSE)


def solve_exact(cal: CalibrationMatrix) -> ContextualValues:
    F = cal.F
    if F.shape[0] != F.shape[1]:
        raise CalibrationError(f"exact inverse needs a square calibration matrix, got {F.shape}")
    try:
        alphas = np.linalg.solve(F, cal.target)
    except np.linalg.LinAlgError as exc:
        raise CalibrationError("calibration matrix is singular") from exc
    return _finish(cal, alphas, EXACT)


def null_space(cal_or_F, rtol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of ``null(F)`` as columns (possibly zero columns)."""
    F = np.asarray(getattr(cal_or_F, "F", cal_or_F), dtype=float)
    dec = svd(F)
    r = dec.rank(rtol)
    return dec.V[:, r:].copy()


PinValue = Union[float, str, GExpr, Callable[[float], float]]


def pin_value(value: PinValue, g: float) -> float:
    if isinstance(value, str):
        value = parse(value)
    if isinstance(value, GExpr) or callable(value):
        return float(value(g))
    return float(value)


def solve_fixed(cal: CalibrationMatrix, fixed: Union[Mapping[int, PinValue], Sequence[Tuple[int, PinValue]]],
                rtol: Optional[float] = None) -> ContextualValues:
    """Pin some components (0-based indices) and solve for the rest.

    The free components take the minimum-norm solution of the reduced
    system; the result must satisfy ``F alpha = a`` to within the residual
    tolerance scaled by the size of the reduced right-hand side (large pins
    cost digits to cancellation).
    """
    pins = dict(fixed.items() if isinstance(fixed, Mapping) else fixed)
    M = cal.F.shape[1]
    for idx in pins:
        if not 0 <= idx < M:
            raise IndexError(f"pin index {idx} out of range for {M} outcomes")
    alphas = np.zeros(M)
    pinned = sorted(pins)
    free = [j for j in range(M) if j not in pins]
    for j in pinned:
        alphas[j] = pin_value(pins[j], cal.g)
    rhs = cal.target - cal.F[:, pinned] @ alphas[pinned]
    if free:
        alphas[free] = pseudoinverse(cal.F[:, free], rtol) @ rhs
    out = _finish(cal, alphas, FIXED)
    pinned_part = float(np.linalg.norm(cal.F[:, pinned] @ alphas[pinned]))
    if out.residual > residual_tolerance(cal.target) + 1e-9 * pinned_part:
        raise InconsistentPinsError(out.residual)
    return out


# --------------------------------------------------------------------------
# variance bound

@dataclass
class VarianceBound:
    norm_sq: float
    leading_series: List[Tuple[int, float]] = field(default_factory=list)
    pole_slope: Optional[float] = None


def variance_bound(cv: ContextualValues, solver: Optional[Callable[[float], ContextualValues]] = None,
                   grid: Optional[Sequence[float]] = None, terms: int = 3) -> VarianceBound:
    """Upper bound ``||alpha||^2`` on the detector's second moment.

    With a per-``g`` ``solver`` the bound is also sampled over ``grid``
    (default 25 geometric points on ``[1e-3, 1e-2]``) and fitted to a Laurent
    series; ``leading_series`` lists ``(power, coefficient)`` for the first
    ``terms`` powers starting at the fitted pole order.
    """
    vb = VarianceBound(norm_sq=cv.norm_sq)
    if solver is None:
        return vb
    gs = np.geomspace(1e-3, 1e-2, 25) if grid is None else np.asarray(grid, dtype=float)
    vals = np.array([solver(g).norm_sq for g in gs])
    slope = pole_order_slope(gs, vals)
    p = max(0, int(round(-slope)))
    coeffs = fit_laurent(gs, vals, -p, -p + 6)
    vb.leading_series = [(k, coeffs[k]) for k in range(-p, -p + terms)]
    vb.pole_slope = slope
    return vb


# --------------------------------------------------------------------------
# minimal nonzero order

@dataclass
class OrderAnalysis:
    n: int
    p_vec: np.ndarray
    Fn: np.ndarray
    solvable_at_order_n: bool
    residual_at_order_n: float
    g_ref: float
    reconstruction: np.ndarray
    truncated_alphas: np.ndarray
    relevant: List[Tuple[float, float, bool]]
    povm_coeffs: List[List[np.ndarray]] = field(repr=False, default_factory=list)
    identity_limit_defect: float = 0.0

    def truncated_effects(self, g: float) -> np.ndarray:
        """POVM truncated after order ``n``: ``sum_{m<=n} C_m g^m``."""
        return np.array([sum(c[m] * g**m for m in range(self.n + 1)) for c in self.povm_coeffs])


def povm_series(ctx: MeasurementContext, order: int, g0: float = DEFAULT_G0, method: str = "auto") -> List[List[np.ndarray]]:
    """Taylor coefficients of every ``E_j = M_j^H M_j`` up to ``order``."""
    out = []
    for op in ctx.operators:
        m = taylor_coeffs(op, order, g0=g0, method=method)
        mh = [c.conj().T for c in m]
        out.append(product_series(mh, m))
    return out


def relevant_singular_values(F: np.ndarray, a: np.ndarray, rtol: Optional[float] = None) -> List[Tuple[float, float, bool]]:
    """``(sigma_k, |(U^T a)_k|, relevant)`` for every left singular direction.

    A direction is relevant when ``|(U^T a)_k| > 1e-10 ||a||``; ``F alpha = a``
    is solvable only if every relevant singular value is nonzero.
    """
    dec = svd(F)
    ua = dec.U.T @ a
    sig = np.zeros(len(ua))
    sig[: len(dec.sigma)] = dec.sigma
    thresh = RELEVANT_RTOL * max(float(np.linalg.norm(a)), 1e-300)
    return [(float(sig[k]), float(abs(ua[k])), bool(abs(ua[k]) > thresh)) for k in range(len(ua))]


def order_analysis(obs: Observable, ctx: MeasurementContext, max_order: int = MAX_TAYLOR_ORDER,
                   g_ref: float = DEFAULT_G0, g0: float = DEFAULT_G0, method: str = "auto",
                   coeff_atol: float = 1e-9) -> OrderAnalysis:
    """Find the lowest order ``n`` at which the POVM departs from ``p_j 1``
    and test whether ``A`` is reachable from the order-``n`` truncation.

    Solvability is decided on the truncated POVM at ``g_ref`` by the residual
    ``||F' F'^+ a - a||``.
    """
    coeffs = povm_series(ctx, max_order, g0=g0, method=method)
    d = ctx.dim
    eye = np.eye(d)
    p = np.array([np.trace(c[0]).real / d for c in coeffs])
    ident_defect = max(float(np.linalg.norm(c[0] - pj * eye)) for c, pj in zip(coeffs, p))
    n = None
    for m in range(1, max_order + 1):
        tol = coeff_atol if method != "fit" else coeff_atol + 1e-12 / g0**m
        if any(np.linalg.norm(c[m]) > tol for c in coeffs):
            n = m
            break
    if n is None:
        raise GIndependentContextError(f"all POVM coefficients of order 1..{max_order} vanish: g-independent context")
    Fn = build_F(obs, np.array([c[n] for c in coeffs])).F
    result = OrderAnalysis(n=n, p_vec=p, Fn=Fn, solvable_at_order_n=False, residual_at_order_n=np.inf,
                           g_ref=g_ref, reconstruction=np.zeros(0), truncated_alphas=np.zeros(0),
                           relevant=[], povm_coeffs=coeffs, identity_limit_defect=ident_defect)
    cal = build_F(obs, result.truncated_effects(g_ref), g_ref)
    cv = solve_pinv(cal)
    result.truncated_alphas = cv.alphas
    result.reconstruction = cal.F @ cv.alphas
    result.residual_at_order_n = cv.residual
    result.solvable_at_order_n = cv.residual <= residual_tolerance(cal.target)
    result.relevant = relevant_singular_values(cal.F, cal.target)
    return result
