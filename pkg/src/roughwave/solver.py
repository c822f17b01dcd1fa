"""Leapfrog evolution of the multiplicative wave equation on the checkerboard.

With unit propagation speed and equal steps, the mild solution satisfies an
exact three-level recursion in which the only stochastic input per site is
the noise mass of the causal diamond around the centre point; the single
approximation of the scheme is freezing the integrand on that diamond.
The frozen value is taken at the diamond's bottom vertex: it is the
nearest point of the evolved parity class, and, being measurable with
respect to the noise strictly before the diamond, it keeps every noise
term conditionally centred, so the scheme preserves E[u] = 1 exactly.

Also here: the delta-velocity companion field (same recursion, point-mass
start), a slow independent Duhamel reference solver on rectangle cells,
and the Cameron-Martin finite-difference check of the derivative product
identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .hilbert import HurstParams, increment_cov
from .kernels import leapfrog_step
from .noise import (
    STREAM_REFERENCE,
    Lattice,
    NoisePath,
    cm_shift_weights,
    seed_sequence,
)

__all__ = [
    "Field",
    "SchemeState",
    "SpaceTimeField",
    "wave_kernel",
    "step",
    "solve_u",
    "solve_v",
    "reference_solve_u",
    "malliavin_fd_check",
]


def wave_kernel(t, x):
    """Fundamental wave solution: 1/2 on |x| < t, else 0."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) < t, 0.5, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Field:
    """Solution values on the parity-compatible sites of one level."""

    level: int
    offset: int
    values: np.ndarray


@dataclass(frozen=True)
class SchemeState:
    prev: Field
    cur: Field

    def __post_init__(self):
        if self.cur.level != self.prev.level + 1:
            raise ValidationError("scheme state needs two consecutive levels")
        if self.cur.offset == self.prev.offset:
            raise ValidationError("parity mismatch: consecutive levels must alternate offsets")


def step(state: SchemeState, diamond_masses: np.ndarray, shift=None) -> Field:
    """Advance one level; diamond_masses (and the optional (eps, q) shift)
    are indexed like the output level."""
    masses = np.asarray(diamond_masses, dtype=float)
    if shift is not None:
        eps, q = shift
        masses = masses + eps * np.asarray(q, dtype=float)
    if len(masses) != len(state.prev.values):
        raise ValidationError("parity mismatch: diamond masses misaligned with the output level")
    out = np.empty_like(state.prev.values)
    leapfrog_step(state.prev.values, state.cur.values, masses, out)
    return Field(state.cur.level + 1, state.prev.offset, out)


class SpaceTimeField:
    """Retained levels of one run (full store or the requested subset)."""

    def __init__(self, lattice: Lattice, levels: dict[int, np.ndarray]):
        self.lattice = lattice
        self.levels = levels

    def values(self, level: int) -> np.ndarray:
        try:
            return self.levels[level]
        except KeyError:
            raise ValidationError(f"level {level} was not retained") from None

    def value_at(self, level: int, j: int) -> float:
        lat = self.lattice
        lo, hi = lat.cone_bounds(level)
        if not (lo <= j <= hi):
            raise ValidationError(f"site j={j} at level {level} is outside the exact-cone region")
        o = lat.site_offset(level)
        return float(self.values(level)[(j - o) // 2])

    def value_at_xt(self, t: float, x: float) -> float:
        lat = self.lattice
        k = lat.level_of(t)
        return self.value_at(k, lat.site_index(x, k))

    def save_trajectory(self, path, meta=None):
        """Level-major float64 dump plus a JSON sidecar descriptor."""
        levels = sorted(self.levels)
        payload = np.concatenate([np.asarray(self.levels[k], "<f8") for k in levels])
        with open(path, "wb") as fh:
            fh.write(b"RWTRJ001")
            payload.tofile(fh)
        lat = self.lattice
        desc = {
            "format": "RWTRJ001",
            "delta": lat.delta,
            "x_min": lat.x_min,
            "x_max": lat.x_max,
            "parity": lat.parity,
            "levels": levels,
            "level_lengths": [len(self.levels[k]) for k in levels],
            "dtype": "<f8",
        }
        if meta:
            desc.update(meta)
        with open(str(path) + ".json", "w") as fh:
            json.dump(desc, fh, indent=1)


def _run_scheme(
    lattice: Lattice,
    path: NoisePath,
    init_prev: np.ndarray,
    init_cur: np.ndarray,
    start_level: int,
    keep,
    shifts=None,
    shift_eps: float = 0.0,
):
    """Shared evolution loop for the solution and delta-velocity fields.

    init_prev/init_cur sit at levels start_level, start_level+1; the level
    start_level+1 is assumed to already include its noise (or to be exact,
    as for the delta start).  keep is a set of levels to retain or "all".
    """
    keep_all = keep == "all"
    keep_set = None if keep_all else set(keep)
    out: dict[int, np.ndarray] = {}

    def retain(level, arr):
        if keep_all or level in keep_set:
            out[level] = arr

    prev, cur = init_prev, init_cur
    retain(start_level, prev)
    retain(start_level + 1, cur)
    for k in range(start_level + 1, lattice.n_levels):
        masses = path.slab(k - 1).down + path.slab(k).up
        if shifts is not None:
            masses = masses + shift_eps * shifts[k]
        nxt = np.empty_like(prev)
        leapfrog_step(prev, cur, masses, nxt)
        prev, cur = cur, nxt
        retain(k + 1, nxt)
    return SpaceTimeField(lattice, out)


def solve_u(
    lattice: Lattice,
    path: NoisePath,
    keep="all",
    shifts=None,
    shift_eps: float = 0.0,
) -> SpaceTimeField:
    """Evolve the mild solution from flat unit initial data.

    The first level consumes the upper half-diamonds (the up triangles of
    slab 0) only; afterwards each level consumes one full diamond per site.
    Deterministic given the path's seed lineage.
    """
    n0 = lattice.n_sites(lattice.site_offset(0))
    n1 = lattice.n_sites(lattice.site_offset(1))
    u0 = np.ones(n0)
    first = path.slab(0).up.copy()
    if shifts is not None:
        first = first + shift_eps * shifts[0]
    if len(first) != n1:
        raise ValidationError("slab-0 up masses misaligned with level 1")
    u1 = 1.0 + 0.5 * first
    return _run_scheme(lattice, path, u0, u1, 0, keep, shifts, shift_eps)


def solve_v(
    lattice: Lattice,
    path: NoisePath,
    r_level: int,
    z_index: int,
    keep="all",
) -> SpaceTimeField:
    """Delta-velocity companion field started at (r, z), sharing the path's noise.

    Zero at level r; the next level carries a single site mass 1/2 at z
    (site mass 1/2 * 2*delta = delta, matching the kernel integral); the
    rest is the same recursion as the solution field.
    """
    if not 0 <= r_level < lattice.n_levels:
        raise ValidationError(f"start level {r_level} outside the lattice")
    o1 = lattice.site_offset(r_level + 1)
    if (r_level + 1 + z_index) % 2 != lattice.parity or not 0 <= z_index <= lattice.n_span:
        raise ValidationError(f"site index {z_index} is off the lattice at level {r_level + 1}")
    v0 = np.zeros(lattice.n_sites(lattice.site_offset(r_level)))
    v1 = np.zeros(lattice.n_sites(o1))
    v1[(z_index - o1) // 2] = 0.5
    return _run_scheme(lattice, path, v0, v1, r_level, keep)


# ---------------------------------------------------------------------------
# independent reference solver (Duhamel sum on rectangle cells)


def reference_solve_u(
    delta: float,
    n_levels: int,
    n_sites: int,
    params: HurstParams,
    master_seed: int,
    replica: int,
):
    """Direct Duhamel-sum discretisation on rectangle cells (oracle path).

    u_{k+1}(x_j) = 1 + sum_{m<=k} sum_i G_{t_{k+1}-t_{m+1/2}}(x_j-x_i)
                   * u_m(x_i) * dW_{m,i},
    with the kernel at the temporal midpoint and cell noises drawn from the
    exact increment covariance (Cholesky; the grids are tiny by contract).
    Statistically equivalent to the leapfrog, not pathwise comparable.
    Returns the full (n_levels+1, n_sites) field.
    """
    if n_sites > 64 or n_levels > 64:
        raise ValidationError("reference solver is restricted to <= 64 sites and levels")
    lag = np.arange(n_sites, dtype=float) * delta
    row = delta * increment_cov(0.0, delta, lag, lag + delta, params)
    cov = row[np.abs(np.arange(n_sites)[:, None] - np.arange(n_sites)[None, :])]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(cov + 1e-12 * row[0] * np.eye(n_sites))

    u = np.ones((n_levels + 1, n_sites))
    scaled = np.zeros((n_levels, n_sites))  # u_m * dW_m, filled as we go
    csum = np.zeros((n_levels, n_sites + 1))
    for k in range(n_levels):
        rng = np.random.Generator(
            np.random.PCG64(seed_sequence(master_seed, STREAM_REFERENCE, replica, k))
        )
        dw = chol @ rng.standard_normal(n_sites)
        scaled[k] = u[k] * dw
        csum[k, 1:] = np.cumsum(scaled[k])
        acc = np.zeros(n_sites)
        j = np.arange(n_sites)
        for m in range(k + 1):
            r = k - m  # window radius in sites: |i-j| <= k-m
            hi = np.minimum(j + r, n_sites - 1) + 1
            lo = np.maximum(j - r, 0)
            acc += csum[m, hi] - csum[m, lo]
        u[k + 1] = 1.0 + 0.5 * acc
    return u


# ---------------------------------------------------------------------------
# Malliavin-derivative finite-difference verification


@dataclass(frozen=True)
class MalliavinCheck:
    lhs: float
    rhs: float
    rel_err: float
    eps: float


def malliavin_fd_check(
    lattice: Lattice,
    path: NoisePath,
    params: HurstParams,
    t: float,
    x: float,
    cell,
    eps: float = 1e-3,
    halo: float | None = None,
    halving_tol: float = 0.05,
) -> MalliavinCheck:
    """Directional-derivative check of D u(t,x) = u(r,z) v^{(r,z)}(t,x).

    lhs: central finite difference of two solves with the noise masses
    shifted along the pairing of the cell indicator (one frozen path).
    rhs: lattice sum over (r, z) of u(r,z) v^{(r,z)}(t,x) against the same
    pairing weights, with every v sharing the frozen path.  An eps-halving
    run guards against nonlinearity bias.
    """
    if halo is None:
        halo = 2.0 * lattice.delta
    k_t = lattice.level_of(t)
    j_x = lattice.site_index(x, k_t)
    q = cm_shift_weights(cell, lattice, params, halo=halo)

    def lhs_at(e):
        up = solve_u(lattice, path, keep=[k_t], shifts=q, shift_eps=+e)
        dn = solve_u(lattice, path, keep=[k_t], shifts=q, shift_eps=-e)
        return (up.value_at(k_t, j_x) - dn.value_at(k_t, j_x)) / (2.0 * e)

    lhs = lhs_at(eps)
    lhs_half = lhs_at(eps / 2.0)
    scale = max(abs(lhs), abs(lhs_half), 1e-12)
    if abs(lhs - lhs_half) > halving_tol * scale:
        from .errors import NumericError

        raise NumericError(
            f"finite-difference not in the linear regime: eps={eps} gives {lhs}, "
            f"eps/2 gives {lhs_half}"
        )

    t0c, t1c, x0c, x1c = map(float, cell)
    u_full = solve_u(lattice, path, keep="all")
    d = lattice.delta
    rhs = 0.0
    for k in range(min(lattice.n_levels, k_t)):
        w_time = min((k + 1) * d, t1c) - max(k * d, t0c)
        if w_time <= 0:
            continue
        o = lattice.site_offset(k + 1)
        u_k = u_full.values(k)
        for z in range(o, lattice.n_span + 1, 2):
            xz = lattice.x_min + z * d
            if xz + d < x0c - halo or xz - d > x1c + halo:
                continue
            if abs(x - xz) >= t - k * d:  # cone support of the companion field
                continue
            if z - 1 < 0 or z + 1 > lattice.n_span:
                continue
            w_space = increment_cov(xz - d, xz + d, x0c, x1c, params)
            if w_space == 0.0:
                continue
            if k == 0:
                u_rz = 1.0
            else:
                oz = lattice.site_offset(k)
                u_rz = 0.5 * (u_k[(z - 1 - oz) // 2] + u_k[(z + 1 - oz) // 2])
            v = solve_v(lattice, path, k, z, keep=[k_t])
            rhs += w_time * w_space * u_rz * v.value_at(k_t, j_x)

    denom = max(abs(lhs), abs(rhs))
    rel = 0.0 if denom < 1e-300 else abs(lhs - rhs) / denom
    return MalliavinCheck(lhs, rhs, rel, eps)
