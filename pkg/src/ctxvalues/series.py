"""Least-squares Laurent/polynomial fits in ``g`` and pole-order estimates."""

from __future__ import annotations

from typing import Dict

import numpy as np


def fit_laurent(gs, values, min_power: int, max_power: int) -> Dict[int, float]:
    """Fit ``values ~ sum_{k=min_power}^{max_power} c_k g^k`` by least squares.

    Columns are normalised to unit max-norm before solving, so basis terms of
    very different magnitude (``g^-4`` next to ``g^2``) stay well scaled.
    """
    gs = np.asarray(gs, dtype=float)
    values = np.asarray(values)
    powers = np.arange(min_power, max_power + 1)
    basis = gs[:, None] ** powers[None, :]
    scale = np.max(np.abs(basis), axis=0)
    sol, *_ = np.linalg.lstsq(basis / scale, values, rcond=None)
    coeffs = sol / scale
    return {int(k): (coeffs[i].item() if np.ndim(coeffs[i]) == 0 else coeffs[i]) for i, k in enumerate(powers)}


def pole_order_slope(gs, values) -> float:
    """Slope of ``log|value|`` against ``log g`` (``-p`` for a ``g^-p`` pole)."""
    gs = np.asarray(gs, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    keep = v > 0
    if keep.sum() < 2:
        return 0.0
    slope, _ = np.polyfit(np.log(gs[keep]), np.log(v[keep]), 1)
    return float(slope)


def pole_order(gs, values) -> int:
    return max(0, int(round(-pole_order_slope(gs, values))))
