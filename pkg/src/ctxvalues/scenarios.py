"""Built-in context files.

``ce1``
    Three-outcome qubit detector with diagonal operators ``1/2 +- g`` and
    ``sqrt(1/2 - 2 g^2) 1``; observable ``diag(a, b)`` (default ``1, -1``),
    prepared in ``|+>`` and post-selected on ``cos t |0> + sin t |1>`` with
    ``tan t = 1/2``.
``ce2``
    Three-outcome qutrit detector with square-root entries; observable
    ``diag(1, 0, 0)``.
``ce2_typo``
    ``ce2`` with the square root missing over the ``1/3`` entry of the second
    operator, which breaks completeness.
``projective``
    The spectral projectors of a diagonal observable (default ``diag(1, -1)``).
"""

from __future__ import annotations

from typing import Callable, Dict, Optional, Sequence

from .ctxfile import ContextFile
from .gexpr import parse


def _diag(entries: Sequence[str]) -> list:
    d = len(entries)
    return [[entries[i] if i == j else "0" for j in range(d)] for i in range(d)]


def _full(entry: str, d: int) -> list:
    return [[entry] * d for _ in range(d)]


def ce1(obs: Optional[Sequence[str]] = None) -> ContextFile:
    if obs is not None and len(obs) != 2:
        raise ValueError(f"ce1 takes two observable values, got {len(obs)}")
    a, b = obs if obs is not None else ("1", "-1")
    return ContextFile(
        dim=2,
        grange=("0", "0.5"),
        outcomes=[
            ("1", _diag(["1/2 + g", "1/2 - g"])),
            ("2", _diag(["1/2 - g", "1/2 + g"])),
            ("3", _diag(["sqrt(1/2 - 2*g^2)"] * 2)),
        ],
        observable=_diag([a, b]),
        state=_full("1/2", 2),
        post=[["4/5", "2/5"], ["2/5", "1/5"]],
    )


def _ce2(m2_last: str, obs: Optional[Sequence[str]]) -> ContextFile:
    return ContextFile(
        dim=3,
        grange=("0", "0.145"),
        outcomes=[
            ("1", _diag(["sqrt(1/2 + g)", "sqrt(1/2)", "sqrt(1/2 + g)"])),
            ("2", _diag(["sqrt(1/3 + g^2)", "sqrt(1/3 + g)", m2_last])),
            ("3", _diag(["sqrt(1/6 - g - g^2)", "sqrt(1/6 - g)", "sqrt(1/6 - g)"])),
        ],
        observable=_diag(list(obs) if obs is not None else ["1", "0", "0"]),
        state=_full("1/3", 3),
        post=[["1/9", "2/9", "2/9"], ["2/9", "4/9", "4/9"], ["2/9", "4/9", "4/9"]],
    )


def ce2(obs: Optional[Sequence[str]] = None) -> ContextFile:
    return _ce2("sqrt(1/3)", obs)


def ce2_typo(obs: Optional[Sequence[str]] = None) -> ContextFile:
    return _ce2("1/3", obs)


def projective(obs: Optional[Sequence[str]] = None) -> ContextFile:
    values = list(obs) if obs is not None else ["1", "-1"]
    d = len(values)
    keys = [float(_value(v)) for v in values]
    distinct = sorted(set(keys), key=keys.index)
    outcomes = []
    for k, lam in enumerate(distinct):
        outcomes.append((str(k + 1), _diag(["1" if x == lam else "0" for x in keys])))
    return ContextFile(
        dim=d,
        grange=("0", "1"),
        outcomes=outcomes,
        observable=_diag(values),
        state=_full(f"1/{d}", d),
        post=_full(f"1/{d}", d),
    )


def _value(src: str) -> float:
    return parse(src)(0.0)


SCENARIOS: Dict[str, Callable[..., ContextFile]] = {
    "ce1": ce1,
    "ce2": ce2,
    "ce2_typo": ce2_typo,
    "projective": projective,
}


def get(name: str, obs: Optional[Sequence[str]] = None) -> ContextFile:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(sorted(SCENARIOS))}") from None
    return factory(obs)
