"""Pure-numpy stepping kernel; mirror of the compiled extension."""

import numpy as np

COMPILED = False


def leapfrog_step(prev, cur, masses, out):
    """One leapfrog level with multiplicative noise on the lagged field.

    out[m] = cur-neighbour sum - prev[m] + 0.5*prev[m]*masses[m].
    The stencil orientation is inferred from the array lengths: the output
    parity class is one shorter (right stencil) or one longer (left
    stencil, outermost slots poisoned with NaN) than the current one.
    """
    n_out, n_cur = len(out), len(cur)
    if len(prev) != n_out or len(masses) != n_out:
        raise ValueError("prev and masses must be indexed like the output level")
    if n_out == n_cur - 1:
        np.add(cur[:-1], cur[1:], out=out)
        out += prev * (0.5 * masses - 1.0)
    elif n_out == n_cur + 1:
        out[1:-1] = cur[:-1] + cur[1:] + prev[1:-1] * (0.5 * masses[1:-1] - 1.0)
        out[0] = out[-1] = np.nan
    else:
        raise ValueError("current and output levels must differ by one site")
    return out
