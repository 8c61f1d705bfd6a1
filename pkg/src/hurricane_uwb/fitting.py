"""Parameter estimation: large-scale regression, fading statistics, arrival
processes, decay constants, diffuse-power least squares and round trips."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import optimize, special
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .analysis import (
    AttenuationSample, ClusterSegmentation, cir_k_factor_db, compute_pdp, segmentation_from_cir,
)
from .channel import Cir, Pdp
from .params import (
    SCAN_DURATION_NS, DiffusePowerModel, Scenario, ScenarioParams, builtin_tables,
)


def _db(x):
    return 10.0 * np.log10(x)


@dataclass
class FitResult:
    """Point estimates with standard errors.

    ``errors`` maps a parameter that could not be estimated to the reason;
    the other estimates remain valid (partial results).
    """

    estimates: dict
    standard_errors: dict = field(default_factory=dict)
    n_samples: int = 0
    residual_norm: float = float("nan")
    flags: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.estimates[name]


# -- large-scale attenuation -------------------------------------------------------

def fit_large_scale(samples: Sequence[AttenuationSample]) -> FitResult:
    """Ordinary least squares of attenuation (dB) on wind speed.

    Returns ``alpha`` (dB per mph), ``a_w0_db`` and ``sigma_a_db`` (residual
    standard deviation with two degrees of freedom removed).
    """
    v = np.array([s.wind_mph for s in samples], dtype=float)
    a = np.array([s.attenuation_db for s in samples], dtype=float)
    return _ols_attenuation(v, a)


def _ols_attenuation(v, a) -> FitResult:
    n = v.size
    if n < 3 or np.ptp(v) == 0:
        raise ValueError("degenerate design: need at least three samples and two distinct wind speeds")
    vbar = v.mean()
    sxx = float(np.sum((v - vbar) ** 2))
    alpha = float(np.sum((v - vbar) * (a - a.mean())) / sxx)
    a_w0 = float(a.mean() - alpha * vbar)
    resid = a - (a_w0 + alpha * v)
    sigma = float(math.sqrt(np.sum(resid ** 2) / (n - 2)))
    return FitResult(
        {"alpha": alpha, "a_w0_db": a_w0, "sigma_a_db": sigma},
        {"alpha": sigma / math.sqrt(sxx), "a_w0_db": sigma * math.sqrt(1.0 / n + vbar ** 2 / sxx)},
        n_samples=n,
        residual_norm=float(np.linalg.norm(resid)),
    )


def draw_attenuation_samples(large_scale, winds_mph, reps: int, rng, noise: bool = True) -> list[AttenuationSample]:
    """Samples of the wind-attenuation law, ``reps`` per wind speed."""
    rng = np.random.default_rng(rng)
    out = []
    for v in winds_mph:
        mean = large_scale.mean_attenuation_db(v)
        draws = rng.normal(mean, large_scale.sigma_a_db, size=reps) if noise else np.full(reps, mean)
        out.extend(AttenuationSample(float(v), float(d)) for d in draws)
    return out


class LargeScaleRegressor(BaseEstimator, RegressorMixin):
    """``attenuation_db ~ a_w0_db + alpha * wind_mph``."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=3)
        if X.shape[1] != 1:
            raise ValueError("expected a single wind-speed column")
        res = _ols_attenuation(X[:, 0], y)
        self.alpha_ = res["alpha"]
        self.a_w0_db_ = res["a_w0_db"]
        self.sigma_a_db_ = res["sigma_a_db"]
        self.result_ = res
        return self

    def predict(self, X):
        check_is_fitted(self, "alpha_")
        X = check_array(X)
        return self.a_w0_db_ + self.alpha_ * X[:, 0]


# -- small-scale fading -----------------------------------------------------------

@dataclass(frozen=True)
class NakagamiFit:
    m: float
    omega: float
    n_samples: int


def fit_nakagami(samples, min_samples: int = 100) -> NakagamiFit:
    """Moment estimates ``m = E[W^2]^2 / Var[W^2]`` and ``omega = E[W^2]``."""
    w = np.asarray(samples, dtype=float).ravel()
    if w.size < min_samples:
        raise ValueError(f"Nakagami fit needs at least {min_samples} samples, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("envelope samples must be finite and nonnegative")
    p = w * w
    omega = float(np.mean(p))
    var = float(np.var(p))
    if var <= 1e-15 * omega * omega:
        raise ValueError("degenerate (deterministic) input: zero power variance")
    return NakagamiFit(omega * omega / var, omega, w.size)


class NakagamiEstimator(BaseEstimator):
    def __init__(self, min_samples=100):
        self.min_samples = min_samples

    def fit(self, X, y=None):
        X = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_min_samples=1)
        res = fit_nakagami(X[:, 0], self.min_samples)
        self.m_, self.omega_ = res.m, res.omega
        return self


def k_to_m(k):
    """Nakagami m matching a Rician K factor: ``(K + 1)^2 / (2K + 1)``."""
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValueError("K factor must be nonnegative")
    m = (k + 1.0) ** 2 / (2.0 * k + 1.0)
    return float(m) if m.ndim == 0 else m


def scan_nakagami(cir: Cir, min_samples: int = 100) -> Optional[NakagamiFit]:
    """Nakagami fit of one scan's tap amplitudes normalised by their mean.

    Returns ``None`` when the scan has too few taps.
    """
    a = cir.all_amplitudes()
    if a.size < min_samples:
        return None
    return fit_nakagami(a / a.mean(), min_samples)


def lognormal_m_statistics(m_values, omega_values, min_scans: int = 30) -> dict:
    """Summarise per-scan Nakagami parameters in dB.

    The mean and the variance of ``m`` (and of ``omega``) are reported as
    ``10 log10`` of the linear moment; a zero variance maps to ``-inf``.
    """
    m = np.asarray(m_values, dtype=float)
    om = np.asarray(omega_values, dtype=float)
    if m.size < min_scans or om.size < min_scans:
        raise ValueError(f"need at least {min_scans} per-scan fits, got {min(m.size, om.size)}")
    if np.any(m <= 0) or np.any(om <= 0):
        raise ValueError("Nakagami parameters must be positive")
    with np.errstate(divide="ignore"):
        return {
            "mu_mf_db": float(_db(np.mean(m))),
            "sigma_mf_db": float(_db(np.var(m, ddof=1))),
            "mu_sc_db": float(_db(np.mean(om))),
            "sigma_sc_db": float(_db(np.var(om, ddof=1))),
        }


# -- arrival processes ------------------------------------------------------------

def fit_poisson_rates(cluster_arrivals: Iterable, ray_offsets: Iterable) -> FitResult:
    """Exponential-gap MLEs ``1 / mean gap`` for cluster and ray arrivals.

    ``cluster_arrivals`` holds one array of arrival times per scan and
    ``ray_offsets`` one array of within-cluster offsets per cluster.  Only
    completed gaps enter, so the last (truncated) interval is ignored.
    """
    est, se, errors = {}, {}, {}
    for name, groups in (("gamma_rate", cluster_arrivals), ("zeta_rate", ray_offsets)):
        gaps = np.concatenate([np.diff(np.asarray(g, dtype=float)) for g in groups] or [np.empty(0)])
        if gaps.size == 0 or gaps.mean() <= 0:
            errors[name] = "no completed inter-arrival gaps"
            continue
        rate = 1.0 / float(gaps.mean())
        est[name] = rate
        se[name] = rate / math.sqrt(gaps.size)
    return FitResult(est, se, n_samples=0, errors=errors)


_LEGENDRE = np.polynomial.legendre.leggauss(96)


def _cluster_loglik(theta, k, g, horizon):
    n_bar, log_sn, log_mu, log_sc = theta
    sigma_n, mu0, sigma_c = math.exp(log_sn), math.exp(log_mu), math.exp(log_sc)
    # Cluster-count law: N = max(1, floor(n_bar + sigma_n Z + 1/2)).
    cdf_upper = special.ndtr((k + 0.5 - n_bar) / sigma_n)
    cdf_lower = np.where(k > 1, special.ndtr((k - 0.5 - n_bar) / sigma_n), 0.0)
    p_eq = np.maximum(cdf_upper - cdf_lower, 1e-300)
    p_more = np.maximum(1.0 - cdf_upper, 0.0)
    # Per-scan mean gap: normal truncated symmetrically to [0.1, 1.9] * mu0.
    x, w = _LEGENDRE
    lo, hi = 0.1 * mu0, 1.9 * mu0
    mu = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    z = (mu - mu0) / sigma_c
    mass = 2.0 * special.ndtr(0.9 * mu0 / sigma_c) - 1.0
    log_f = -0.5 * z * z - math.log(sigma_c * math.sqrt(2 * math.pi) * mass) + np.log(0.5 * (hi - lo) * w)
    kk, gg = k[:, None] - 1.0, g[:, None]
    log_gaps = -kk * np.log(mu) - gg / mu
    tail = p_eq[:, None] + p_more[:, None] * np.exp(-(horizon - gg) / mu)
    return float(np.sum(special.logsumexp(log_f + log_gaps + np.log(tail), axis=1)))


def fit_cluster_process(n_clusters, last_arrivals_ns, horizon_ns: float = SCAN_DURATION_NS) -> FitResult:
    """Joint maximum likelihood for the cluster count and arrival process.

    Each scan contributes its observed cluster count ``K`` and last cluster
    arrival ``G``.  Clusters beyond the scan window are unobserved, so the
    likelihood mixes "exactly K clusters" with "more than K, the next one
    falling after the window", integrating over the per-scan mean gap.
    Estimates ``n_bar``, ``sigma_nbar``, ``gamma_rate`` (1 / mean gap) and
    ``sigma_c_ns``.
    """
    k = np.asarray(n_clusters, dtype=float)
    g = np.asarray(last_arrivals_ns, dtype=float)
    if k.size < 10:
        raise ValueError("cluster-process fit needs at least 10 scans")
    if np.any(k < 1) or np.any(g < 0) or np.any(g >= horizon_ns):
        raise ValueError("invalid cluster statistics")
    multi = k > 1
    mean_gap = float(np.sum(g[multi]) / np.sum(k[multi] - 1)) if multi.any() else horizon_ns
    start = np.array([max(k.mean(), 1.0), math.log(max(k.std(), 0.2)), math.log(mean_gap),
                      math.log(0.5 * mean_gap)])

    def nll(theta):
        if not -50.0 < theta[0] < 1e3 or abs(theta[1]) > 8 or abs(theta[3] - theta[2]) > 8:
            return 1e300
        return -_cluster_loglik(theta, k, g, horizon_ns)

    res = optimize.minimize(nll, start, method="Nelder-Mead",
                            options={"xatol": 1e-5, "fatol": 1e-4, "maxiter": 4000, "maxfev": 8000})
    theta = res.x
    est = {
        "n_bar": float(theta[0]),
        "sigma_nbar": float(math.exp(theta[1])),
        "gamma_rate": float(math.exp(-theta[2])),
        "sigma_c_ns": float(math.exp(theta[3])),
    }
    se = {}
    try:
        hess = _numeric_hessian(nll, theta)
        cov = np.linalg.inv(hess)
        se["n_bar"] = float(math.sqrt(max(cov[0, 0], 0.0)))
        se["gamma_rate"] = float(est["gamma_rate"] * math.sqrt(max(cov[2, 2], 0.0)))
    except np.linalg.LinAlgError:
        pass
    return FitResult(est, se, n_samples=int(k.size), flags={"converged": bool(res.success)})


def _numeric_hessian(f, x, rel=1e-3):
    n = x.size
    h = rel * np.maximum(np.abs(x), 1.0)
    hess = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n); ei[i] = h[i]
            ej = np.zeros(n); ej[j] = h[j]
            if i == j:
                v = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
            else:
                v = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
            hess[i, j] = hess[j, i] = v
    return hess


def fit_ray_rate(ray_counts, exposures_ns) -> FitResult:
    """Ray arrival rate from per-scan ray counts and observation windows.

    Within a scan, rays after each cluster's first one form a Poisson
    process over the window, so ``exposure / (R + 1)`` is an unbiased
    estimate of that scan's mean gap; the rate is the inverse of their
    average across scans.  This stays unbiased when the mean gap varies
    from scan to scan, where pooling counts would not.
    """
    r = np.asarray(ray_counts, dtype=float)
    e = np.asarray(exposures_ns, dtype=float)
    if r.size == 0:
        raise ValueError("no scans")
    gaps = e / (r + 1.0)
    mean_gap = float(gaps.mean())
    rate = 1.0 / mean_gap
    se = rate * float(gaps.std(ddof=1)) / mean_gap / math.sqrt(r.size) if r.size > 1 else float("nan")
    return FitResult({"zeta_rate": rate}, {"zeta_rate": se}, n_samples=int(r.size))


# -- decay constants ------------------------------------------------------------

class DecayAccumulator:
    """Streaming sufficient statistics for the two decay constants.

    Within each cluster, log bin power is regressed on delay with a common
    slope (``-1 / lambda_ray``) and a per-cluster intercept.  The fitted
    power at each cluster start is then regressed on the cluster arrival
    with a per-scan offset, giving ``-1 / lambda_cap``.
    """

    def __init__(self):
        self._sxy = 0.0
        self._sxx = 0.0
        self._points = 0
        self._clusters = []  # (scan, start_ns, mean_x, mean_y)
        self._scan = 0

    def add(self, pdp: Pdp, segmentation: ClusterSegmentation) -> None:
        x_all = pdp.delays_ns
        for start, end, _ in segmentation.boundaries:
            y = pdp.bins[start:end + 1]
            keep = y > 0
            if np.count_nonzero(keep) < 2:
                continue
            x = x_all[start:end + 1][keep]
            ly = np.log(y[keep])
            mx, my = float(x.mean()), float(ly.mean())
            self._sxx += float(np.sum((x - mx) ** 2))
            self._sxy += float(np.sum((x - mx) * (ly - my)))
            self._points += x.size
            self._clusters.append((self._scan, float(x_all[start]), mx, my))
        self._scan += 1

    def result(self) -> FitResult:
        est, se, errors = {}, {}, {}
        if self._sxx <= 0 or not self._clusters:
            errors["lambda_ray"] = "no cluster with two or more nonzero bins"
            errors["lambda_cap"] = "no cluster with two or more nonzero bins"
            return FitResult(est, se, errors=errors)
        slope = self._sxy / self._sxx
        if slope < 0:
            est["lambda_ray"] = -1.0 / slope
        else:
            errors["lambda_ray"] = "non-decaying within-cluster profile"
        scans = np.array([c[0] for c in self._clusters])
        start = np.array([c[1] for c in self._clusters])
        y0 = np.array([c[3] - slope * (c[2] - c[1]) for c in self._clusters])
        # Demean within each scan that has at least two clusters.
        _, inv, counts = np.unique(scans, return_inverse=True, return_counts=True)
        multi = counts[inv] >= 2
        if not multi.any():
            errors["lambda_cap"] = "needs scans with at least two clusters"
            return FitResult(est, se, n_samples=self._scan, errors=errors)
        inv, start, y0 = inv[multi], start[multi], y0[multi]
        n_groups = inv.max() + 1
        cnt = np.bincount(inv, minlength=n_groups)
        cnt[cnt == 0] = 1
        xs = start - (np.bincount(inv, start, n_groups) / cnt)[inv]
        ys = y0 - (np.bincount(inv, y0, n_groups) / cnt)[inv]
        sxx = float(np.sum(xs * xs))
        slope_c = float(np.sum(xs * ys)) / sxx if sxx > 0 else 0.0
        if slope_c < 0:
            est["lambda_cap"] = -1.0 / slope_c
            resid = ys - slope_c * xs
            dof = max(resid.size - n_groups - 1, 1)
            s = math.sqrt(float(np.sum(resid ** 2)) / dof)
            se["lambda_cap"] = s / math.sqrt(sxx) / slope_c ** 2
        else:
            errors["lambda_cap"] = "non-decaying cluster powers"
        return FitResult(est, se, n_samples=self._scan, errors=errors)


def fit_decay_constants(pdps: Sequence[Pdp], segmentations: Sequence[ClusterSegmentation]) -> FitResult:
    """Estimate ``lambda_cap`` and ``lambda_ray`` (ns) from segmented PDPs."""
    if len(pdps) != len(segmentations):
        raise ValueError("one segmentation per PDP is required")
    acc = DecayAccumulator()
    for pdp, seg in zip(pdps, segmentations):
        acc.add(pdp, seg)
    return acc.result()


# -- diffuse power least squares ---------------------------------------------------

def fit_diffuse_power_lse(design, a0_observed, a_b: float = 1.0) -> FitResult:
    """Least-squares constants of the diffuse-power model.

    ``design`` rows are ``(b_r0, b_p0, v_w0)``.  The model
    ``A0 = a_b (1 + c_r0 b_r0 + c_p0 b_p0 + c_w0 v)`` is linear in the
    constants, so they solve ``D c = A0 / a_b - 1``.  The normal equations
    are accumulated with exactly rounded sums, which makes the solution
    independent of row order.  Negative constants are clamped to zero and
    flagged.
    """
    d = np.asarray(design, dtype=float)
    y = np.asarray(a0_observed, dtype=float)
    if d.ndim != 2 or d.shape[1] != 3 or d.shape[0] != y.size:
        raise ValueError("design must be an (n, 3) array matching the observations")
    if a_b <= 0:
        raise ValueError("a_b must be positive")
    if np.any(y <= 0):
        raise ValueError("observed diffuse powers must be positive")
    target = y / a_b - 1.0
    gram = np.array([[math.fsum(d[:, i] * d[:, j]) for j in range(3)] for i in range(3)])
    rhs = np.array([math.fsum(d[:, i] * target) for i in range(3)])
    if np.linalg.matrix_rank(gram) < 3:
        raise ValueError("degenerate design: constants are not identifiable")
    coef = np.linalg.solve(gram, rhs)
    names = ("c_r0", "c_p0", "c_w0")
    flags = {f"{n}_clamped": bool(c < 0) for n, c in zip(names, coef)}
    coef = np.maximum(coef, 0.0)
    fitted = a_b * (1.0 + d @ coef)
    resid = target - d @ coef
    est = dict(zip(names, map(float, coef)))
    est["sigma_a0_db"] = float(np.std(_db(y / np.maximum(fitted, 1e-300)), ddof=0))
    rel = float(np.linalg.norm(resid) / max(np.linalg.norm(target), 1e-300))
    return FitResult(est, n_samples=int(y.size), residual_norm=rel, flags=flags)


def diffuse_power_design(winds_mph=(90.0, 100.0, 110.0, 120.0, 130.0, 140.0)) -> np.ndarray:
    """Full factorial rain x pressure x wind design (24 rows for six winds)."""
    return np.array([(r, p, v) for r in (0, 1) for p in (0, 1) for v in winds_mph], dtype=float)


class DiffusePowerRegressor(BaseEstimator, RegressorMixin):
    def __init__(self, a_b=1.0):
        self.a_b = a_b

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        res = fit_diffuse_power_lse(X, y, self.a_b)
        self.coef_ = np.array([res["c_r0"], res["c_p0"], res["c_w0"]])
        self.sigma_a0_db_ = res["sigma_a0_db"]
        self.result_ = res
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return self.a_b * (1.0 + X @ self.coef_)

    def to_model(self) -> DiffusePowerModel:
        check_is_fitted(self, "coef_")
        return DiffusePowerModel(self.a_b, *map(float, self.coef_), self.sigma_a0_db_)


# -- whole-ensemble estimation and round trips -------------------------------------

class ScanStatistics:
    """Accumulates per-scan statistics so ensembles can be analysed as a stream."""

    def __init__(self):
        self.n_clusters = []
        self.last_arrival = []
        self.ray_counts = []
        self.exposure = []
        self.direct_db = []
        self.k_db = []
        self.decay = DecayAccumulator()

    def add(self, cir: Cir) -> None:
        g = cir.cluster_arrivals_ns
        self.n_clusters.append(g.size)
        self.last_arrival.append(float(g[-1]))
        self.ray_counts.append(int(cir.delays_ns.size - g.size))
        self.exposure.append(SCAN_DURATION_NS - float(g[0]))
        if cir.direct is not None:
            self.direct_db.append(float(_db(cir.direct_power)))
            self.k_db.append(cir_k_factor_db(cir))
        pdp = compute_pdp(cir, include_direct=False)
        self.decay.add(pdp, segmentation_from_cir(cir, pdp))

    @property
    def n_scans(self) -> int:
        return len(self.n_clusters)

    def estimate(self) -> FitResult:
        if self.n_scans == 0:
            raise ValueError("no scans accumulated")
        est, se, errors = {}, {}, {}
        for fit in self._fits():
            if isinstance(fit, tuple):
                errors.update(dict([fit]))
                continue
            est.update(fit.estimates)
            se.update(fit.standard_errors)
            errors.update(fit.errors)
        if self.direct_db:
            d = np.array(self.direct_db)
            est["mu_dr_db"] = float(d.mean())
            est["sigma_dr_db"] = float(d.std(ddof=1)) if d.size > 1 else 0.0
            k = np.array(self.k_db)
            est["mu_k_db"] = float(k.mean())
            est["sigma_k_db"] = float(k.std(ddof=1)) if k.size > 1 else 0.0
        return FitResult(est, se, n_samples=self.n_scans, errors=errors)

    def _fits(self):
        for name, fn in (
            ("n_bar", lambda: fit_cluster_process(self.n_clusters, self.last_arrival)),
            ("zeta_rate", lambda: fit_ray_rate(self.ray_counts, self.exposure)),
            ("lambda_cap", self.decay.result),
        ):
            try:
                yield fn()
            except ValueError as exc:
                yield (name, str(exc))


class ChannelParameterEstimator(BaseEstimator):
    """Estimate multipath parameters from an iterable of synthesized CIRs."""

    def fit(self, X, y=None):
        stats = ScanStatistics()
        for cir in X:
            stats.add(cir)
        res = stats.estimate()
        self.estimates_ = res.estimates
        self.standard_errors_ = res.standard_errors
        self.errors_ = res.errors
        self.n_scans_ = stats.n_scans
        return self


DEFAULT_TOLERANCES = {
    "n_bar": 0.10,
    "gamma_rate": 0.10,
    "zeta_rate": 0.10,
    "lambda_cap": 0.15,
    "lambda_ray": 0.15,
}

_INFORMATIONAL = ("sigma_nbar", "sigma_c_ns", "mu_dr_db", "sigma_dr_db", "mu_k_db", "sigma_k_db")


@dataclass
class RoundtripRow:
    parameter: str
    expected: Optional[float]
    estimate: Optional[float]
    rel_error: Optional[float]
    tolerance: Optional[float]
    checked: bool
    passed: Optional[bool]
    note: str = ""


@dataclass
class RoundtripReport:
    scenario: Scenario
    n_scans: int
    seed: int
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows if r.checked)

    def row(self, name) -> RoundtripRow:
        for r in self.rows:
            if r.parameter == name:
                return r
        raise KeyError(name)


def roundtrip_report(scenario: Scenario, n_scans: int, seed: int, params: Optional[ScenarioParams] = None,
                     tolerances: Optional[dict] = None) -> RoundtripReport:
    """Synthesize an ensemble and compare recovered parameters with the inputs.

    The large-scale attenuation layer is switched off so the direct-path
    level is comparable with its table statistics.  Every checked row
    carries its relative error and tolerance; a parameter that cannot be
    estimated becomes a failing row with the reason as its note.
    """
    from .synthesis import SynthesisOptions, iter_ensemble

    if n_scans < 1:
        raise ValueError("n_scans must be at least 1")
    params = params or builtin_tables()[scenario.key]
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    stats = ScanStatistics()
    for cir in iter_ensemble(scenario, params, n_scans, seed, options=SynthesisOptions(large_scale=False)):
        stats.add(cir)
    fit = stats.estimate()
    mp = params.multipath
    rows = []
    for name in list(DEFAULT_TOLERANCES) + list(_INFORMATIONAL):
        expected = getattr(mp, name)
        checked = name in DEFAULT_TOLERANCES
        if expected is None:
            rows.append(RoundtripRow(name, None, None, None, None, False, None, f"absent ({scenario.path_kind.value})"))
            continue
        if name not in fit.estimates:
            note = fit.errors.get(name, "not estimated")
            rows.append(RoundtripRow(name, expected, None, None, tol.get(name), checked,
                                     False if checked else None, note))
            continue
        value = fit.estimates[name]
        rel = abs(value - expected) / abs(expected) if expected != 0 else abs(value)
        rows.append(RoundtripRow(name, float(expected), float(value), float(rel), tol.get(name), checked,
                                 bool(rel <= tol[name]) if checked else None))
    return RoundtripReport(scenario, int(n_scans), int(seed), rows)
