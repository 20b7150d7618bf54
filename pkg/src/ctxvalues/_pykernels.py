"""Pure-Python/numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Both backends expose the same functions with the same error reporting, so
the dispatcher in :mod:`ctxvalues._kernels` can swap them freely.
"""

import itertools

import numpy as np

# opcodes of the postfix expression program
OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_POW = 7
OP_SQRT = 8

ERR_NONE = 0
ERR_SQRT = 1
ERR_DIV = 2


def _ipow(x, n):
    # square-and-multiply; the compiled kernel does the same sequence of roundings
    result = np.ones_like(x)
    base = x.copy()
    while n:
        if n & 1:
            result = result * base
        base = base * base
        n >>= 1
    return result


def rpn_eval(ops, args, gs):
    """Evaluate a postfix program at every point of ``gs``.

    Returns ``(values, err_code, err_instr, err_index)``. On error the code is
    nonzero and ``(err_index, err_instr)`` is the lexicographically first
    failure; ``values`` is then unspecified.
    """
    gs = np.ascontiguousarray(gs, dtype=np.float64)
    stack = []
    first = None
    with np.errstate(all="ignore"):
        for i, op in enumerate(ops):
            if op == OP_CONST:
                stack.append(np.full_like(gs, args[i]))
            elif op == OP_VAR:
                stack.append(gs.copy())
            elif op == OP_NEG:
                stack.append(-stack.pop())
            elif op == OP_POW:
                stack.append(_ipow(stack.pop(), int(args[i])))
            elif op == OP_SQRT:
                x = stack.pop()
                bad = np.flatnonzero(x < 0.0)
                if bad.size and (first is None or bad[0] < first[2]):
                    first = (ERR_SQRT, i, int(bad[0]))
                stack.append(np.sqrt(x))
            else:
                y = stack.pop()
                x = stack.pop()
                if op == OP_ADD:
                    stack.append(x + y)
                elif op == OP_SUB:
                    stack.append(x - y)
                elif op == OP_MUL:
                    stack.append(x * y)
                elif op == OP_DIV:
                    bad = np.flatnonzero(y == 0.0)
                    if bad.size and (first is None or bad[0] < first[2]):
                        first = (ERR_DIV, i, int(bad[0]))
                    stack.append(x / y)
                else:
                    raise ValueError(f"unknown opcode {op}")
    if first is not None:
        return stack[-1], first[0], first[1], first[2]
    return stack[-1], ERR_NONE, -1, -1


def moment_sum(alphas, effects, rho, n):
    """Brute-force ``sum_{j1..jn} a_j1..a_jn tr(rho E_j1 .. E_jn)``."""
    alphas = np.asarray(alphas, dtype=np.float64)
    effects = np.asarray(effects, dtype=np.complex128)
    rho = np.asarray(rho, dtype=np.complex128)
    total = 0j
    for combo in itertools.product(range(len(alphas)), repeat=n):
        coef = 1.0
        prod = np.eye(rho.shape[0], dtype=np.complex128)
        for j in combo:
            coef *= alphas[j]
            prod = prod @ effects[j]
        total += coef * np.trace(rho @ prod)
    return complex(total)
