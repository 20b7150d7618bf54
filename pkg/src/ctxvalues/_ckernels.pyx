# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: postfix expression evaluation over g-grids and the
brute-force multi-index moment sum. See ``_pykernels.py`` for the reference
semantics."""

import numpy as np
from libc.math cimport sqrt

DEF OP_CONST = 0
DEF OP_VAR = 1
DEF OP_ADD = 2
DEF OP_SUB = 3
DEF OP_MUL = 4
DEF OP_DIV = 5
DEF OP_NEG = 6
DEF OP_POW = 7
DEF OP_SQRT = 8


cdef inline double _ipow(double x, long n) nogil:
    cdef double result = 1.0
    cdef double base = x
    while n:
        if n & 1:
            result = result * base
        base = base * base
        n >>= 1
    return result


def rpn_eval(ops, args, gs):
    cdef long long[::1] o = np.ascontiguousarray(ops, dtype=np.int64)
    cdef double[::1] a = np.ascontiguousarray(args, dtype=np.float64)
    cdef double[::1] g = np.ascontiguousarray(gs, dtype=np.float64)
    cdef Py_ssize_t n_ins = o.shape[0]
    cdef Py_ssize_t n_g = g.shape[0]
    out = np.empty(n_g, dtype=np.float64)
    cdef double[::1] res = out
    cdef double[::1] stack = np.empty(n_ins + 1, dtype=np.float64)
    cdef Py_ssize_t k, i, sp
    cdef long long op
    cdef int err = 0
    cdef Py_ssize_t err_i = -1, err_k = -1
    with nogil:
        for k in range(n_g):
            sp = 0
            for i in range(n_ins):
                op = o[i]
                if op == OP_CONST:
                    stack[sp] = a[i]
                    sp += 1
                elif op == OP_VAR:
                    stack[sp] = g[k]
                    sp += 1
                elif op == OP_NEG:
                    stack[sp - 1] = -stack[sp - 1]
                elif op == OP_POW:
                    stack[sp - 1] = _ipow(stack[sp - 1], <long>a[i])
                elif op == OP_SQRT:
                    if stack[sp - 1] < 0.0:
                        err = 1
                        err_i = i
                        err_k = k
                        break
                    stack[sp - 1] = sqrt(stack[sp - 1])
                else:
                    sp -= 1
                    if op == OP_ADD:
                        stack[sp - 1] = stack[sp - 1] + stack[sp]
                    elif op == OP_SUB:
                        stack[sp - 1] = stack[sp - 1] - stack[sp]
                    elif op == OP_MUL:
                        stack[sp - 1] = stack[sp - 1] * stack[sp]
                    elif op == OP_DIV:
                        if stack[sp] == 0.0:
                            err = 2
                            err_i = i
                            err_k = k
                            break
                        stack[sp - 1] = stack[sp - 1] / stack[sp]
            if err:
                break
            res[k] = stack[0]
    return out, err, err_i, err_k


def moment_sum(alphas, effects, rho, int n):
    cdef double[::1] al = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef double complex[:, :, ::1] E = np.ascontiguousarray(effects, dtype=np.complex128)
    cdef double complex[:, ::1] r = np.ascontiguousarray(rho, dtype=np.complex128)
    cdef Py_ssize_t M = al.shape[0]
    cdef Py_ssize_t d = r.shape[0]
    cdef double complex[:, :, ::1] prefix = np.zeros((n + 1, d, d), dtype=np.complex128)
    cdef double[::1] coef = np.ones(n + 1, dtype=np.float64)
    cdef Py_ssize_t[::1] idx = np.zeros(max(n, 1), dtype=np.intp)
    cdef Py_ssize_t start = 0, L, j, p, q, s
    cdef double complex acc, tr, total = 0
    if n == 0:
        return complex(np.trace(np.asarray(rho)))
    with nogil:
        for p in range(d):
            prefix[0, p, p] = 1.0
        while True:
            for L in range(start, n):
                j = idx[L]
                coef[L + 1] = coef[L] * al[j]
                for p in range(d):
                    for q in range(d):
                        acc = 0
                        for s in range(d):
                            acc = acc + prefix[L, p, s] * E[j, s, q]
                        prefix[L + 1, p, q] = acc
            tr = 0
            for p in range(d):
                for q in range(d):
                    tr = tr + r[p, q] * prefix[n, q, p]
            total = total + coef[n] * tr
            L = n - 1
            while L >= 0:
                idx[L] += 1
                if idx[L] < M:
                    break
                idx[L] = 0
                L -= 1
            if L < 0:
                break
            start = L
    return complex(total)
