"""Quantum measurement model: observables, states, measurement contexts,
outcome statistics and post-selected conditioned averages."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .matcore import check_hermitian, commutator, spectral_decompose

COMPLETENESS_ATOL = 1e-9
TRACE_ATOL = 1e-10
POST_DENOM_ATOL = 1e-14
IMPOSSIBLE_ATOL = 1e-14
COMPAT_RTOL = 1e-10
MOMENT_MAX_ORDER = 4
MOMENT_MAX_OUTCOMES = 8
VALIDITY_SAMPLES = 16


class MeasurementError(ValueError):
    pass


class POVMCompletenessError(MeasurementError):
    def __init__(self, defect: float, g: float):
        self.defect = defect
        self.g = g
        super().__init__(f"POVM completeness violated at g={g!r}: ||sum E_j - 1||_F = {defect:.3e}")


class InvalidStateError(MeasurementError):
    pass


class ImpossibleOutcomeError(MeasurementError):
    def __init__(self, outcome: int, probability: float):
        self.outcome = outcome
        self.probability = probability
        super().__init__(f"impossible outcome {outcome}: P = {probability:.3e}")


class NullPostSelectionError(MeasurementError):
    def __init__(self, denominator: float):
        self.denominator = denominator
        super().__init__(f"null post-selection: denominator {denominator:.3e}")


class IncompatibleContextError(MeasurementError):
    def __init__(self, norms: Sequence[float], symbol: str = "M_j"):
        self.norms = list(norms)
        listing = ", ".join(f"{n:.3e}" for n in self.norms)
        super().__init__(f"observable does not commute with the context (||[A, {symbol}]||_F = {listing})")


class Observable:
    """Hermitian matrix with its spectral decomposition cached."""

    def __init__(self, matrix):
        self.matrix = check_hermitian(matrix)
        self.dim = self.matrix.shape[0]

    @classmethod
    def diagonal(cls, values: Sequence[float]) -> "Observable":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @cached_property
    def spectrum(self) -> List[Tuple[float, np.ndarray]]:
        return spectral_decompose(self.matrix)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([a for a, _ in self.spectrum])

    @property
    def projectors(self) -> List[np.ndarray]:
        return [p for _, p in self.spectrum]

    def power(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, n)


class State:
    """Density matrix: Hermitian, positive semidefinite, unit trace."""

    def __init__(self, rho):
        rho = check_hermitian(rho)
        tr = np.trace(rho).real
        if abs(tr - 1.0) > TRACE_ATOL:
            raise InvalidStateError(f"trace {tr!r} differs from 1")
        w = np.linalg.eigvalsh(rho)
        if w[0] < -TRACE_ATOL:
            raise InvalidStateError(f"negative eigenvalue {w[0]:.3e}")
        self.rho = rho
        self.dim = rho.shape[0]

    @classmethod
    def pure(cls, psi) -> "State":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "State":
        return cls(np.eye(dim) / dim)


class PostSelection:
    """Effect ``E_f`` of the second (post-selecting) measurement."""

    def __init__(self, effect):
        effect = check_hermitian(effect)
        w = np.linalg.eigvalsh(effect)
        if w[0] < -TRACE_ATOL or w[-1] > 1 + TRACE_ATOL:
            raise MeasurementError(f"effect eigenvalues must lie in [0, 1], got [{w[0]:.3e}, {w[-1]:.3e}]")
        self.effect = effect
        self.dim = effect.shape[0]

    @classmethod
    def pure(cls, psi) -> "PostSelection":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def identity(cls, dim: int) -> "PostSelection":
        return cls(np.eye(dim))


class MeasurementContext:
    """Measurement operators ``M_j(g)`` of one detector.

    Completeness ``sum_j M_j^H M_j = 1`` is checked on a 16-point sample of
    the validity interval at construction, and again at every ``g`` that
    :func:`povm_at` evaluates.
    """

    def __init__(self, operators: Sequence, labels: Optional[Sequence[str]] = None,
                 validity: Optional[Tuple[float, float]] = None, check: bool = True):
        if not operators:
            raise MeasurementError("a context needs at least one measurement operator")
        dims = {op.dim for op in operators}
        if len(dims) != 1:
            raise MeasurementError(f"operators have mixed dimensions {sorted(dims)}")
        self.operators = list(operators)
        self.dim = dims.pop()
        self.labels = list(labels) if labels is not None else [str(j + 1) for j in range(len(operators))]
        if len(self.labels) != len(self.operators):
            raise MeasurementError("one label per operator required")
        if validity is None:
            lo = max(op.validity[0] for op in operators)
            hi = min(op.validity[1] for op in operators)
            validity = (lo, hi)
        self.validity = (float(validity[0]), float(validity[1]))
        if check:
            for g in self.sample_grid():
                povm_at(self, g)

    def __len__(self) -> int:
        return len(self.operators)

    def sample_grid(self, n: int = VALIDITY_SAMPLES) -> np.ndarray:
        lo, hi = self.validity
        return np.linspace(lo, hi, n)

    def operators_at(self, g: float) -> np.ndarray:
        return np.array([op(g) for op in self.operators])

    def operators_many(self, gs) -> np.ndarray:
        """Array of shape ``(len(gs), M, d, d)``."""
        return np.stack([op.evaluate_many(gs) for op in self.operators], axis=1)


def completeness_defect(effects) -> float:
    effects = np.asarray(effects)
    return float(np.linalg.norm(effects.sum(axis=0) - np.eye(effects.shape[-1])))


def povm_at(ctx: MeasurementContext, g: float) -> np.ndarray:
    """POVM elements ``E_j = M_j^H M_j`` at ``g``, shape ``(M, d, d)``."""
    ops = ctx.operators_at(g)
    effects = np.conj(np.swapaxes(ops, -1, -2)) @ ops
    effects = 0.5 * (effects + np.conj(np.swapaxes(effects, -1, -2)))
    defect = completeness_defect(effects)
    if defect > COMPLETENESS_ATOL:
        raise POVMCompletenessError(defect, g)
    return effects


def _rho(state) -> np.ndarray:
    return state.rho if isinstance(state, State) else State(state).rho


def _alphas(cv) -> np.ndarray:
    return np.asarray(getattr(cv, "alphas", cv), dtype=float)


def outcome_probs(ctx: MeasurementContext, g: float, state) -> np.ndarray:
    rho = _rho(state)
    effects = povm_at(ctx, g)
    p = np.einsum("ij,kji->k", rho, effects).real
    return p


def state_update(ctx: MeasurementContext, g: float, state, outcome: int) -> State:
    rho = _rho(state)
    m = ctx.operators_at(g)[outcome]
    unnorm = m @ rho @ m.conj().T
    p = float(np.trace(unnorm).real)
    if p <= IMPOSSIBLE_ATOL:
        raise ImpossibleOutcomeError(outcome, p)
    return State(unnorm / p)


def expectation(obs: Observable, state) -> float:
    rho = _rho(state)
    return float(np.trace(rho @ obs.matrix).real)


def compatibility_norms(obs: Observable, ops) -> List[float]:
    return [float(np.linalg.norm(commutator(obs.matrix, m))) for m in ops]


def check_compatible(obs: Observable, ops) -> None:
    norms = compatibility_norms(obs, ops)
    a = np.linalg.norm(obs.matrix)
    limits = [COMPAT_RTOL * a * np.linalg.norm(m) for m in ops]
    if any(n > lim for n, lim in zip(norms, limits)):
        raise IncompatibleContextError(norms)


def cv_moment(ctx: MeasurementContext, g: float, cv, state, n: int, obs: Optional[Observable] = None) -> float:
    """n-th moment of the observable from sequences of detector outcomes.

    The full ``M^n`` multi-index sum is evaluated term by term. The context
    must be fully compatible with the observable, taken from ``obs`` or from
    ``cv.observable``.
    """
    if n < 1 or n > MOMENT_MAX_ORDER:
        raise ValueError(f"moment order must be in [1, {MOMENT_MAX_ORDER}]")
    if len(ctx) > MOMENT_MAX_OUTCOMES:
        raise ValueError(f"at most {MOMENT_MAX_OUTCOMES} outcomes supported")
    obs = obs if obs is not None else getattr(cv, "observable", None)
    if obs is None:
        raise ValueError("cv_moment needs the observable to check compatibility")
    check_compatible(obs, ctx.operators_at(g))
    rho = _rho(state)
    total = _kernels.moment_sum(_alphas(cv), povm_at(ctx, g), rho, n)
    return float(total.real)


@dataclass
class ConditionedAverageResult:
    g: float
    value: float
    cond_probs: np.ndarray
    joint_unnormalized: np.ndarray
    post_prob: float
    alphas: np.ndarray = field(repr=False, default=None)


def joint_weights(ops: np.ndarray, rho: np.ndarray, effect: np.ndarray) -> np.ndarray:
    """``tr(E_f M_j rho M_j^H)`` for every outcome ``j``."""
    evolved = ops @ rho @ np.conj(np.swapaxes(ops, -1, -2))
    return np.einsum("ij,kji->k", effect, evolved).real


def conditioned_average(ctx: MeasurementContext, g: float, cv, state, post: PostSelection) -> ConditionedAverageResult:
    rho = _rho(state)
    alphas = _alphas(cv)
    povm_at(ctx, g)
    joint = joint_weights(ctx.operators_at(g), rho, post.effect)
    denom = float(joint.sum())
    if denom <= POST_DENOM_ATOL:
        raise NullPostSelectionError(denom)
    cond = joint / denom
    return ConditionedAverageResult(
        g=g, value=float(alphas @ cond), cond_probs=cond, joint_unnormalized=joint, post_prob=denom, alphas=alphas
    )
