# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernel: fused leapfrog level with multiplicative noise."""

import numpy as np

cimport numpy as cnp

COMPILED = True


def leapfrog_step(double[::1] prev, double[::1] cur, double[::1] masses, double[::1] out):
    """out[m] = cur-neighbour sum - prev[m] + 0.5*prev[m]*masses[m].

    Orientation from lengths, as in the numpy fallback: output one shorter
    than cur uses the right stencil, one longer the left stencil with NaN
    poisoning on the outermost slots.
    """
    cdef Py_ssize_t n_out = out.shape[0]
    cdef Py_ssize_t n_cur = cur.shape[0]
    cdef Py_ssize_t m
    if prev.shape[0] != n_out or masses.shape[0] != n_out:
        raise ValueError("prev and masses must be indexed like the output level")
    if n_out == n_cur - 1:
        for m in range(n_out):
            out[m] = cur[m] + cur[m + 1] + prev[m] * (0.5 * masses[m] - 1.0)
    elif n_out == n_cur + 1:
        for m in range(1, n_out - 1):
            out[m] = cur[m - 1] + cur[m] + prev[m] * (0.5 * masses[m] - 1.0)
        out[0] = float("nan")
        out[n_out - 1] = float("nan")
    else:
        raise ValueError("current and output levels must differ by one site")
    return np.asarray(out)
