"""Limit-theorem diagnostics over replica ensembles.

Estimators here are deliberately plain (sample moments, OLS in log-log,
one- and two-sample Kolmogorov-Smirnov) so that every one of them can be
validated on synthetic Gaussian ensembles with known parameters,
independently of the SPDE machinery.  The total-variation metric of the
quantitative CLT is not estimable at these sample sizes; the KS distance
is used as the computable surrogate throughout and labelled as such in
the outputs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats as sps

from .errors import ValidationError

__all__ = [
    "spatial_average",
    "SummaryStats",
    "summarize",
    "variance_scan",
    "normality_profile",
    "ergodic_functional",
    "ergodic_probe",
    "increment_ratio",
    "conjecture_probe",
    "write_replica_csv",
    "write_summary",
]


def spatial_average(values: np.ndarray, xs: np.ndarray, spacing: float, R: float) -> float:
    """Midpoint Riemann sum of (u - 1) over the sites inside [-R, R].

    xs are the site positions of one level (spacing 2*delta); the caller is
    responsible for the sites being inside the exact-cone region.
    """
    if R <= 0:
        raise ValidationError("averaging radius must be positive")
    if R > np.max(xs) + spacing / 2 or -R < np.min(xs) - spacing / 2:
        raise ValidationError(f"radius {R} exceeds the covered site range")
    mask = np.abs(xs) <= R
    return float(spacing * np.sum(values[mask] - 1.0))


@dataclass(frozen=True)
class SummaryStats:
    R: float
    t: float
    M: int
    mean: float
    var: float
    var_over_R: float
    ks: float
    skew: float
    kurtosis: float

    def __post_init__(self):
        if self.M < 2:
            raise ValidationError("need at least two replicas")
        if not (0.0 <= self.ks <= 1.0) or self.var < 0:
            raise ValidationError("inconsistent summary statistics")


def _ks_normal(sample: np.ndarray) -> float:
    """One-sample KS distance of the standardized sample to the standard normal."""
    z = (sample - sample.mean()) / sample.std()
    return float(sps.kstest(z, "norm").statistic)


def summarize(fr: np.ndarray, R: float, t: float) -> SummaryStats:
    fr = np.asarray(fr, dtype=float)
    return SummaryStats(
        R=R,
        t=t,
        M=len(fr),
        mean=float(fr.mean()),
        var=float(fr.var(ddof=1)),
        var_over_R=float(fr.var(ddof=1) / R),
        ks=_ks_normal(fr),
        skew=float(sps.skew(fr)),
        kurtosis=float(sps.kurtosis(fr)),
    )


def _loglog_fit(x, y):
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    n = len(lx)
    sxx = np.sum((lx - lx.mean()) ** 2)
    slope = float(np.sum((lx - lx.mean()) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    se = float(np.sqrt(np.sum(resid**2) / max(n - 2, 1) / sxx))
    return slope, intercept, se


def variance_scan(fr_by_R: dict[float, np.ndarray], t: float) -> dict:
    """OLS of log var(F_R) against log R, plus var/R per R.

    Requires at least three radii and 500 replicas per radius (the sample
    variance is otherwise too loose for a meaningful slope).
    """
    Rs = sorted(fr_by_R)
    if len(Rs) < 3:
        raise ValidationError("variance_scan needs at least three radii")
    M = min(len(fr_by_R[R]) for R in Rs)
    if M < 500:
        raise ValidationError("variance_scan needs at least 500 replicas")
    variances = np.array([np.var(fr_by_R[R], ddof=1) for R in Rs])
    if np.any(variances <= 0):
        from .errors import NumericError

        raise NumericError("degenerate variance in the scan")
    slope, intercept, se = _loglog_fit(Rs, variances)
    return {
        "t": t,
        "R": list(map(float, Rs)),
        "var": variances.tolist(),
        "var_over_R": (variances / np.asarray(Rs)).tolist(),
        "slope": slope,
        "slope_se": se,
        "intercept": intercept,
    }


def normality_profile(fr_by_R: dict[float, np.ndarray], t: float) -> dict:
    """Per-R KS distance to the standard normal and the log-log decay slope."""
    Rs = sorted(fr_by_R)
    if min(len(fr_by_R[R]) for R in Rs) < 1000:
        raise ValidationError("normality_profile needs at least 1000 replicas")
    ks = np.array([_ks_normal(np.asarray(fr_by_R[R], float)) for R in Rs])
    slope, intercept, se = _loglog_fit(Rs, ks)
    return {
        "t": t,
        "R": list(map(float, Rs)),
        "ks": ks.tolist(),
        "ks_slope": slope,
        "ks_slope_se": se,
        "metric": "kolmogorov-smirnov (surrogate for total variation)",
    }


def ergodic_functional(values, xs, spacing, R, coeffs=(1.0,), shifts=(0.0,)):
    """U_R = sum over sites in [-R, R] of cos(sum_j b_j u(t, x + zeta_j)) * spacing.

    The shifts must be multiples of the site spacing; sites whose shifted
    position leaves the sampled window are dropped.
    """
    xs = np.asarray(xs, float)
    values = np.asarray(values, float)
    arg = np.zeros(len(xs))
    ok = np.abs(xs) <= R
    for b, zeta in zip(coeffs, shifts):
        steps = zeta / spacing
        si = int(round(steps))
        if abs(steps - si) > 1e-9:
            raise ValidationError("ergodic shifts must be multiples of the site spacing")
        shifted = np.roll(values, -si)
        if si > 0:
            shifted[len(values) - si :] = np.nan
        elif si < 0:
            shifted[: -si] = np.nan
        arg += b * shifted
    ok &= np.isfinite(arg)
    return float(spacing * np.sum(np.cos(arg[ok])))


def ergodic_probe(u_r_by_R: dict[float, np.ndarray], fr_by_R: dict[float, np.ndarray]) -> dict:
    """Variance-decay report for the ergodicity criterion.

    Accepts when Var(U_R)/R shows no growth trend (fitted log-log slope of
    Var(U_R) at most 1 within twice its standard error) and the spatial
    mean F_R/R at the largest radius is within four standard errors of 0.
    """
    Rs = sorted(u_r_by_R)
    var_u = np.array([np.var(u_r_by_R[R], ddof=1) for R in Rs])
    slope, _, se = _loglog_fit(Rs, np.maximum(var_u, 1e-300))
    R_big = max(fr_by_R)
    fr = np.asarray(fr_by_R[R_big], float)
    mean_fr_over_R = float(fr.mean() / R_big)
    se_fr_over_R = float(fr.std(ddof=1) / math.sqrt(len(fr)) / R_big)
    return {
        "R": list(map(float, Rs)),
        "var_U": var_u.tolist(),
        "var_U_over_R": (var_u / np.asarray(Rs)).tolist(),
        "var_U_over_R2": (var_u / np.asarray(Rs) ** 2).tolist(),
        "var_U_slope": slope,
        "var_U_slope_se": se,
        "no_growth": bool(slope <= 1.0 + 2.0 * se),
        "fr_over_R": mean_fr_over_R,
        "fr_over_R_se": se_fr_over_R,
        "fr_over_R_ok": bool(abs(mean_fr_over_R) <= 4.0 * se_fr_over_R),
    }


def increment_ratio(fr_by_t: dict[float, np.ndarray], pairs, R: float) -> dict:
    """Moment-increment ratios ||F_R(t)-F_R(s)||_2 / (sqrt(R) sqrt(t-s)).

    Only uniformity over the (s, t) grid is testable (the tightness
    constant is not constructive), so the report carries the ratio spread.
    """
    ratios = {}
    for s, t in pairs:
        if t <= s:
            raise ValidationError("increment pairs need s < t")
        d = np.asarray(fr_by_t[t], float) - np.asarray(fr_by_t[s], float)
        ratios[(s, t)] = float(
            np.sqrt(np.mean(d**2)) / (math.sqrt(R) * math.sqrt(t - s))
        )
    vals = np.array(list(ratios.values()))
    return {
        "R": R,
        "ratios": {f"{s}-{t}": v for (s, t), v in ratios.items()},
        "spread": float(vals.max() / vals.min()) if vals.min() > 0 else float("inf"),
    }


def conjecture_probe(site_values: np.ndarray, xs: np.ndarray, spacing: float, x_max: float, n_groups: int = 10) -> dict:
    """Evidence report for the open window-limit identity.

    lhs: twice the trapezoid integral over [-x_max, x_max] of the pooled
    spatial autocovariance of u(t, .); pooling over replicas and
    translations is justified by strict stationarity.  No pass/fail: the
    caller attaches the series value it is compared against.
    """
    vals = np.asarray(site_values, float)
    if vals.ndim != 2:
        raise ValidationError("site_values must be (replicas, sites)")
    mu = vals.mean()
    centred = vals - mu
    m_max = int(x_max / spacing)
    m_max = min(m_max, vals.shape[1] - 1)

    def integral(rows):
        covs = np.empty(m_max + 1)
        for m in range(m_max + 1):
            covs[m] = float(np.mean(rows[:, : rows.shape[1] - m] * rows[:, m:]))
        return 2.0 * spacing * (covs[0] + 2.0 * covs[1:].sum()), covs

    lhs, covs = integral(centred)
    groups = np.array_split(np.arange(vals.shape[0]), n_groups)
    per_group = np.array([integral(centred[g])[0] for g in groups if len(g)])
    return {
        "lhs": lhs,
        "lhs_se": float(per_group.std(ddof=1) / math.sqrt(len(per_group))),
        "x_max": float(m_max * spacing),
        "cov_lags": covs.tolist(),
    }


# ---------------------------------------------------------------------------
# persistence


def write_replica_csv(path, rows):
    """Per-replica table: (replica, seed, R, t, F_R)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica", "seed", "R", "t", "F_R"])
        w.writerows(rows)


def write_summary(csv_path, json_path, summaries, extra=None):
    """Summary table per (R, t) as CSV plus a JSON mirror with error bands."""
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["R", "t", "M", "mean", "var", "var_over_R", "ks", "skew", "kurtosis"])
        for s in summaries:
            w.writerow(
                [s.R, s.t, s.M, s.mean, s.var, s.var_over_R, s.ks, s.skew, s.kurtosis]
            )
    payload = {"summaries": [asdict(s) for s in summaries]}
    for s, d in zip(summaries, payload["summaries"]):
        d["mean_se"] = math.sqrt(s.var / s.M)
        d["var_se"] = s.var * math.sqrt(2.0 / max(s.M - 1, 1))
    if extra:
        payload.update(extra)
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=1, default=str)
