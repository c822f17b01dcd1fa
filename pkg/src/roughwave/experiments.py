"""Experiment kinds: configuration-driven runs binding all the modules.

A run builds one lattice sized to the dependence cone of every requested
output (so spatial truncation is exact, not approximate), tabulates the
slab covariances once, then evolves independent replicas whose noise
streams are derived from (master_seed, replica, level) -- making every
artifact a pure function of the configuration and the master seed,
independent of worker count and scheduling.
"""

from __future__ import annotations

import math
import multiprocessing
import os
import time

import numpy as np
from scipy import stats as sps

from . import __version__, chaos, stats
from .config import ExperimentConfig
from .errors import NumericError, ValidationError
from .hilbert import (
    SampledFunction,
    gagliardo_form,
    make_params,
    spectral_form,
    step_inner_exact,
)
from .manifest import atomic_write_text, write_manifest
from .noise import CovTable, Lattice, NoisePath, SlabSampler, build_cov_table, table_for_lattice
from .solver import malliavin_fd_check, solve_u, solve_v

# ---------------------------------------------------------------------------
# ensemble plumbing


def build_lattice(cfg: ExperimentConfig) -> Lattice:
    """Lattice sized to the exact-cone rule for the largest radius and horizon."""
    d = cfg.delta
    k_main = int(round(cfg.t / d))
    r_max = max(list(cfg.r_list) + [cfg.x_window, cfg.cov_x_max])
    w = int(math.ceil((r_max + cfg.t) / d)) + 4
    if w % 2:
        w += 1
    parity = (k_main + w) % 2  # places x = 0 on the board at the main level
    return Lattice(delta=d, n_levels=k_main, x_min=-w * d, x_max=w * d, parity=parity)


def load_or_build_table(cfg: ExperimentConfig, lattice: Lattice, params) -> CovTable:
    from .noise import embedding_length

    need = embedding_length(lattice) + 1
    if cfg.cov_cache and os.path.exists(cfg.cov_cache):
        tab = CovTable.load(cfg.cov_cache)
        if (
            abs(tab.params.H - params.H) < 1e-12
            and abs(tab.delta - lattice.delta) < 1e-12
            and tab.max_lag >= need
        ):
            return tab
    tab = build_cov_table(lattice.delta, params, need)
    if cfg.cov_cache:
        tab.save(cfg.cov_cache)
    return tab


class EnsembleResult:
    def __init__(self, fr, u_r, sites, site_xs, spacing):
        self.fr = fr  # {(R, t): array over replicas}
        self.u_r = u_r  # {R: array}
        self.sites = sites  # (replicas, n_window_sites) at the main level
        self.site_xs = site_xs
        self.spacing = spacing


_WS = {}


def _init_worker(lattice, sampler, cfg, levels, level_times):
    _WS.update(
        lattice=lattice, sampler=sampler, cfg=cfg, levels=levels, level_times=level_times
    )


def _cone_slice(lattice: Lattice, level: int, values: np.ndarray):
    lo, hi = lattice.cone_bounds(level)
    o = lattice.site_offset(level)
    js = np.arange(o, lattice.n_span + 1, 2)
    keep = (js >= lo) & (js <= hi)
    return lattice.x_of(js[keep]), values[keep]


def _run_replica(rep: int):
    lattice, sampler, cfg = _WS["lattice"], _WS["sampler"], _WS["cfg"]
    path = NoisePath(sampler, cfg.master_seed, rep)
    field = solve_u(lattice, path, keep=_WS["levels"])
    spacing = 2.0 * lattice.delta
    fr = {}
    window = None
    u_r = {}
    for level, t in _WS["level_times"]:
        xs, vals = _cone_slice(lattice, level, field.values(level))
        for R in cfg.r_list:
            fr[(R, t)] = stats.spatial_average(vals, xs, spacing, R)
        if abs(t - cfg.t) < 1e-12:
            w = max(cfg.x_window, cfg.cov_x_max)
            mask = np.abs(xs) <= w + 1e-9
            window = vals[mask]
            for R in cfg.r_list:
                u_r[R] = stats.ergodic_functional(
                    vals, xs, spacing, R, cfg.ergodic_coeffs, cfg.ergodic_shifts
                )
    return rep, fr, u_r, window


def run_ensemble(cfg: ExperimentConfig, lattice: Lattice, sampler: SlabSampler) -> EnsembleResult:
    levels = sorted({lattice.level_of(t) for t in cfg.probe_times})
    level_times = [(k, k * lattice.delta) for k in levels]
    M = cfg.replicas
    workers = min(cfg.resolved_workers(), M)
    args = (lattice, sampler, cfg, levels, level_times)
    results = [None] * M
    if workers > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers, initializer=_init_worker, initargs=args) as pool:
            for rep, fr, u_r, window in pool.imap_unordered(
                _run_replica, range(M), chunksize=max(1, M // (8 * workers))
            ):
                results[rep] = (fr, u_r, window)
    else:
        _init_worker(*args)
        for rep in range(M):
            results[rep] = _run_replica(rep)[1:]

    fr = {key: np.array([results[m][0][key] for m in range(M)]) for key in results[0][0]}
    u_r = {R: np.array([results[m][1][R] for m in range(M)]) for R in results[0][1]}
    sites = np.array([results[m][2] for m in range(M)])
    xs, _ = _cone_slice(
        lattice, lattice.level_of(cfg.t), np.zeros(lattice.n_sites(lattice.site_offset(lattice.level_of(cfg.t))))
    )
    w = max(cfg.x_window, cfg.cov_x_max)
    site_xs = xs[np.abs(xs) <= w + 1e-9]
    return EnsembleResult(fr, u_r, sites, site_xs, 2.0 * lattice.delta)


def _replica_rows(cfg, ens):
    rows = []
    for (R, t), arr in sorted(ens.fr.items()):
        for rep, v in enumerate(arr):
            rows.append([rep, f"({cfg.master_seed},1,{rep},*)", R, t, repr(float(v))])
    return rows


def _summaries(cfg, ens):
    return [stats.summarize(arr, R, t) for (R, t), arr in sorted(ens.fr.items())]


# ---------------------------------------------------------------------------
# experiment kinds


def run_simulate(cfg, out_dir, lattice, sampler, params):
    ens = run_ensemble(cfg, lattice, sampler)
    paths = []
    p1 = os.path.join(out_dir, "replicas.csv")
    stats.write_replica_csv(p1, _replica_rows(cfg, ens))
    p2, p3 = os.path.join(out_dir, "summary.csv"), os.path.join(out_dir, "summary.json")
    stats.write_summary(p2, p3, _summaries(cfg, ens))
    paths += [p1, p2, p3]
    if cfg.store_trajectory:
        path = NoisePath(sampler, cfg.master_seed, 0)
        field = solve_u(lattice, path, keep="all")
        trj = os.path.join(out_dir, "trajectory-r0.bin")
        field.save_trajectory(trj, meta={"replica": 0, "master_seed": cfg.master_seed})
        paths += [trj, trj + ".json"]
    return paths


def run_variance_scan(cfg, out_dir, lattice, sampler, params):
    ens = run_ensemble(cfg, lattice, sampler)
    fr_t = {R: ens.fr[(R, cfg.t)] for R in cfg.r_list}
    scan = stats.variance_scan(fr_t, cfg.t)
    k_series = chaos.K_trunc(cfg.t, params, max(2, cfg.chaos_n_max), cfg.kappa_convention)
    scan["k_trunc"] = k_series.value
    scan["k_trunc_error"] = k_series.error
    scan["kappa_convention"] = cfg.kappa_convention
    scan["finite_R_gamma1"] = {
        str(R): chaos.gamma1_window_average(R, cfg.t, params, cfg.kappa_convention)
        for R in cfg.r_list
    }
    scan["var_over_R_vs_limit"] = {
        str(R): scan["var_over_R"][i] / (k_series.value + scan["finite_R_gamma1"][str(R)])
        for i, R in enumerate(scan["R"])
    }
    p1, p2 = os.path.join(out_dir, "summary.csv"), os.path.join(out_dir, "summary.json")
    stats.write_summary(p1, p2, _summaries(cfg, ens), extra={"variance_scan": scan})
    return [p1, p2]


def run_clt(cfg, out_dir, lattice, sampler, params):
    ens = run_ensemble(cfg, lattice, sampler)
    fr_t = {R: ens.fr[(R, cfg.t)] for R in cfg.r_list}
    prof = stats.normality_profile(fr_t, cfg.t)
    p1, p2 = os.path.join(out_dir, "summary.csv"), os.path.join(out_dir, "summary.json")
    stats.write_summary(p1, p2, _summaries(cfg, ens), extra={"normality_profile": prof})
    return [p1, p2]


def _stationarity_pairs(ens):
    """Three two-sample KS tests between site marginals well inside the cone."""
    xs = ens.site_xs
    picks = []
    for frac_a, frac_b in ((0.1, 0.9), (0.25, 0.75), (0.4, 0.6)):
        ia = int(frac_a * (len(xs) - 1))
        ib = int(frac_b * (len(xs) - 1))
        res = sps.ks_2samp(ens.sites[:, ia], ens.sites[:, ib])
        picks.append(
            {
                "x1": float(xs[ia]),
                "x2": float(xs[ib]),
                "ks": float(res.statistic),
                "pvalue": float(res.pvalue),
                "accept_1pct": bool(res.pvalue >= 0.01),
            }
        )
    return picks


def run_ergodic(cfg, out_dir, lattice, sampler, params):
    ens = run_ensemble(cfg, lattice, sampler)
    fr_t = {R: ens.fr[(R, cfg.t)] for R in cfg.r_list}
    report = stats.ergodic_probe(ens.u_r, fr_t)
    report["stationarity"] = _stationarity_pairs(ens)
    report["ergodic_coeffs"] = cfg.ergodic_coeffs
    report["ergodic_shifts"] = cfg.ergodic_shifts
    p1, p2 = os.path.join(out_dir, "summary.csv"), os.path.join(out_dir, "summary.json")
    stats.write_summary(p1, p2, _summaries(cfg, ens), extra={"ergodic": report})
    return [p1, p2]


def run_conjecture(cfg, out_dir, lattice, sampler, params):
    ens = run_ensemble(cfg, lattice, sampler)
    mask = np.abs(ens.site_xs) <= cfg.cov_x_max + 1e-9
    probe = stats.conjecture_probe(
        ens.sites[:, mask], ens.site_xs[mask], ens.spacing, cfg.cov_x_max
    )
    k_series = chaos.K_trunc(cfg.t, params, max(2, cfg.chaos_n_max), cfg.kappa_convention)
    report = {
        "lhs_window_integral": probe["lhs"],
        "lhs_se": probe["lhs_se"],
        "x_max": probe["x_max"],
        "rhs_K_trunc": k_series.value,
        "rhs_error": k_series.error,
        "kappa_convention": cfg.kappa_convention,
        "note": "open conjecture: evidence only, no pass/fail",
        "cov_lags": probe["cov_lags"],
    }
    path = os.path.join(out_dir, "conjecture.json")
    import json

    atomic_write_text(path, json.dumps(report, indent=1))
    return [path]


def run_chaos_tables(cfg, out_dir, lattice, sampler, params):
    p1 = os.path.join(out_dir, "chaos_terms.csv")
    chaos.write_chaos_table(
        p1, params, cfg.probe_times, cfg.chaos_xs, cfg.chaos_n_max, cfg.kappa_convention
    )
    p2 = os.path.join(out_dir, "k_limit.csv")
    lines = ["H,t,n_max,value,tail_estimate,kappa_convention"]
    for t in cfg.probe_times:
        series = chaos.K_trunc(t, params, max(2, cfg.chaos_n_max), cfg.kappa_convention)
        lines.append(
            f"{params.H},{t},{max(2, cfg.chaos_n_max)},{series.value!r},"
            f"{series.tail_estimate!r},{cfg.kappa_convention}"
        )
    atomic_write_text(p2, "\n".join(lines) + "\n")
    return [p1, p2]


def default_malliavin_cells(cfg):
    """Interior test cells inside the backward cone of (t, 0), plus the two
    exact-zero probes (after-time and outside-cone)."""
    d = cfg.delta
    t = cfg.t
    interior = []
    for i in range(cfg.malliavin_cells):
        t0 = d * (1 + (i % 2))
        x0 = -0.5 * t + 0.25 * t * (i % 3)
        interior.append((t0, t0 + d, x0, x0 + 0.5 * t))
    zero_after = (t + d / 2, t + 3 * d / 2, -0.5 * t, 0.5 * t)
    zero_outside = (d, 2 * d, t + 6 * d, t + 6 * d + 2 * d)
    return interior, zero_after, zero_outside


def run_malliavin(cfg, out_dir, lattice, sampler, params):
    # the malliavin lattice must extend past the horizon and past the cone
    d = cfg.delta
    k_main = int(round(cfg.t / d))
    w = int(math.ceil((2 * cfg.t) / d)) + 10
    if w % 2:
        w += 1
    lat = Lattice(
        delta=d, n_levels=k_main + 2, x_min=-w * d, x_max=w * d, parity=(k_main + w) % 2
    )
    tab = table_for_lattice(lat, params)
    samp = SlabSampler(tab, lat)
    path = NoisePath(samp, cfg.master_seed, 0)
    interior, zero_after, zero_outside = default_malliavin_cells(cfg)
    rows = ["kind,t0,t1,x0,x1,lhs,rhs,rel_err"]
    worst = 0.0
    for cell in interior:
        chk = malliavin_fd_check(lat, path, params, cfg.t, 0.0, cell, eps=cfg.malliavin_eps)
        worst = max(worst, chk.rel_err)
        rows.append(f"interior,{cell[0]},{cell[1]},{cell[2]},{cell[3]},{chk.lhs!r},{chk.rhs!r},{chk.rel_err!r}")
    for name, cell in (("zero-after-time", zero_after), ("zero-outside-cone", zero_outside)):
        chk = malliavin_fd_check(lat, path, params, cfg.t, 0.0, cell, eps=cfg.malliavin_eps)
        rows.append(f"{name},{cell[0]},{cell[1]},{cell[2]},{cell[3]},{chk.lhs!r},{chk.rhs!r},{chk.rel_err!r}")
        if chk.lhs != 0.0 or chk.rhs != 0.0:
            raise NumericError(f"{name} cell produced nonzero sides: {chk}")
    path_csv = os.path.join(out_dir, "malliavin.csv")
    atomic_write_text(path_csv, "\n".join(rows) + "\n")
    return [path_csv]


# ---------------------------------------------------------------------------
# selftest


def run_selftest(cfg, out_dir, lattice, sampler, params):
    failures = []
    lines = []

    def check(name, ok, detail=""):
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        if not ok:
            failures.append(name)

    rng = np.random.default_rng(7)
    h = 0.25
    worst = 0.0
    for _ in range(5):
        nf, ng = rng.integers(2, 7, size=2)
        f = SampledFunction(h * rng.integers(-6, 3), h, rng.uniform(-1, 1, nf))
        g = SampledFunction(h * rng.integers(-6, 3), h, rng.uniform(-1, 1, ng))
        exact = step_inner_exact(f, g, params)
        tol = 1e-3 * (1 + abs(exact))
        worst = max(
            worst,
            abs(gagliardo_form(f, g, params) - exact) / tol,
            abs(spectral_form(f, g, params) - exact) / tol,
        )
    check("hilbert three-way agreement", worst < 1.0, f"worst rel {worst:.2e} of tolerance")

    dev = 0.0
    for alpha in (-0.5, 0.0, 0.3, 0.7):
        for t in (0.5, 2.0, 4.0):
            ratio = chaos.sin_int(alpha, t) / chaos.sin_int(alpha, 1.0)
            dev = max(dev, abs(ratio / t ** (1 - alpha) - 1.0))
    check("sin_int scaling law", dev < 1e-8, f"max dev {dev:.2e}")

    b1 = abs(chaos.beta_int([1.0, 1.0], 1.0) - 1.0 / 24.0)
    b2 = abs(chaos.beta_int([0.5, -0.5], 1.0) - math.pi / 4.0)
    b3 = abs(chaos.beta_int([0.0], 3.0) - 3.0)
    check("beta_int identities", max(b1, b2, b3) < 1e-12, f"max dev {max(b1, b2, b3):.2e}")

    tab = build_cov_table(0.1, params, 8)
    rel = abs(tab.uu[0] - tab.lag0_exact()) / tab.lag0_exact()
    check("cov-table lag-0 closed form", rel < 1e-10, f"rel {rel:.2e}")

    lat = Lattice(delta=0.125, n_levels=8, x_min=-2.0, x_max=2.0, parity=0)
    zero_tab = CovTable(params, 0.125, 40, np.zeros(41), np.zeros(41), 0.0)
    zsamp = SlabSampler(zero_tab, lat)
    zpath = NoisePath(zsamp, 1, 0)
    u = solve_u(lat, zpath, keep="all")
    ok_u = all(
        np.allclose(_cone_slice(lat, k, u.values(k))[1], 1.0) for k in range(lat.n_levels + 1)
    )
    check("zero-noise solution is identically 1", ok_u)
    v = solve_v(lat, zpath, 0, lat.site_index(0.125, 1), keep="all")
    ok_v = True
    for k in range(1, lat.n_levels + 1):
        xs, vals = _cone_slice(lat, k, v.values(k))
        expect = np.where(np.abs(xs - 0.125) < k * 0.125, 0.5, 0.0)
        ok_v &= bool(np.array_equal(vals, expect))
    check("zero-noise delta field equals the discrete cone", ok_v)

    k2 = chaos.K2_closed(1.0, params, cfg.kappa_convention)
    series = chaos.K_trunc(1.0, params, 2, cfg.kappa_convention)
    check(
        "K truncation matches the closed n=2 form",
        abs(series.value - k2) <= 1e-10 * abs(k2),
        f"dev {abs(series.value - k2):.2e}",
    )
    scale = chaos.K2_closed(2.0, params, cfg.kappa_convention) / k2
    check(
        "K2 power-law scaling",
        abs(scale / 2 ** (4 * params.H + 3) - 1) < 1e-10 and k2 > 0,
        f"ratio dev {abs(scale / 2 ** (4 * params.H + 3) - 1):.2e}",
    )

    report = "\n".join(lines) + "\n"
    print(report, end="")
    path = os.path.join(out_dir, "selftest.txt")
    atomic_write_text(path, report)
    if failures:
        raise NumericError(f"selftest failures: {', '.join(failures)}")
    return [path]


# ---------------------------------------------------------------------------
# dispatcher

_KIND_RUNNERS = {
    "simulate": run_simulate,
    "variance-scan": run_variance_scan,
    "clt": run_clt,
    "ergodic": run_ergodic,
    "chaos-tables": run_chaos_tables,
    "malliavin-check": run_malliavin,
    "conjecture": run_conjecture,
    "selftest": run_selftest,
}

_NEEDS_ENSEMBLE = ("simulate", "variance-scan", "clt", "ergodic", "conjecture")


def run(cfg: ExperimentConfig):
    """Execute the configured experiment; returns the list of written artifacts."""
    cfg.validate()
    params = make_params(cfg.hurst)
    os.makedirs(cfg.out_dir, exist_ok=True)
    t0 = time.time()
    lattice = sampler = None
    if cfg.kind in _NEEDS_ENSEMBLE:
        lattice = build_lattice(cfg)
        sampler = SlabSampler(load_or_build_table(cfg, lattice, params), lattice)
    outputs = _KIND_RUNNERS[cfg.kind](cfg, cfg.out_dir, lattice, sampler, params)
    write_manifest(cfg.out_dir, cfg, time.time() - t0, outputs, __version__)
    return outputs
