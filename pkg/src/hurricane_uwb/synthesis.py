"""Stochastic generation of clustered UWB impulse responses in hurricanes.

Clusters and the rays inside them arrive as two nested Poisson processes.
Tap powers decay exponentially with cluster arrival (constant ``lambda_cap``)
and with the ray offset inside the cluster (constant ``lambda_ray``); tap
amplitudes are lognormal around that mean power.  LOS scans additionally
carry a dominant direct component on the first tap.

Every scan is a pure function of ``(scenario, params, scaling, options,
seed)``.  Independent substreams are used for the multipath structure, the
scan power level and the direct component, so switching the direct
component off (or changing the wind speed) leaves the scattered rays
bit-identical.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .channel import TWO_PI, Cir, Pdp, PulseTemplate, ScanWaveform, Tap, delay_to_bin
from .params import (
    N_BINS,
    SCAN_DURATION_NS,
    HurricaneScaling,
    PathKind,
    Scenario,
    ScenarioParams,
    amplitude_sigma_ln,
    db_to_power,
    power_sigma_ln,
    validate,
)

MAX_SEED = 2 ** 64
_TINY = np.finfo(float).tiny


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def scan_seed(master_seed: int, scan_index: int) -> int:
    """Derive the 64-bit seed of one scan from the ensemble master seed."""
    _check_seed(master_seed)
    state = np.random.SeedSequence([int(master_seed), int(scan_index)]).generate_state(1, np.uint64)
    return int(state[0])


def ensemble_seed(master_seed: int, ensemble_index: int) -> int:
    """Master seed of the ``ensemble_index``-th ensemble of a multi-ensemble run.

    Uses a three-word key so it never coincides with a scan seed.
    """
    _check_seed(master_seed)
    state = np.random.SeedSequence([int(master_seed), int(ensemble_index), 1]).generate_state(1, np.uint64)
    return int(state[0])


def _check_seed(seed):
    if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < MAX_SEED:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")


# -- elementary draws --------------------------------------------------------

def draw_cluster_count(n_bar, sigma_nbar, rng) -> int:
    """Number of clusters in one scan: ``max(1, round(n_bar + x))``, x ~ N(0, sigma^2)."""
    if n_bar < 1 or sigma_nbar < 0:
        raise ValueError("need n_bar >= 1 and sigma_nbar >= 0")
    x = _as_rng(rng).normal(0.0, sigma_nbar) if sigma_nbar > 0 else 0.0
    return max(1, int(math.floor(n_bar + x + 0.5)))


class ArrivalScales(NamedTuple):
    gamma_bar_ns: float
    tau_bar_ns: float
    gamma_rate: float
    zeta_rate: float


def apply_hurricane_scaling(scaling: HurricaneScaling) -> ArrivalScales:
    """Inflate the base-case mean inter-arrival times by the hurricane constants."""
    problems = scaling.problems()
    if problems:
        raise ValueError("; ".join(problems))
    gamma_bar = (1.0 + scaling.c_c) * scaling.gamma_bar_b_ns
    tau_bar = (1.0 + scaling.c_m) * scaling.tau_bar_b_ns
    return ArrivalScales(gamma_bar, tau_bar, 1.0 / gamma_bar, 1.0 / tau_bar)


def draw_cluster_arrivals(gamma_rate, n_clusters, rng, horizon_ns=SCAN_DURATION_NS) -> np.ndarray:
    """Cluster arrival delays, the first one at 0 ns.

    Arrivals at or beyond the horizon are dropped, so fewer than
    ``n_clusters`` values may come back (never fewer than one).
    """
    if gamma_rate <= 0 or n_clusters < 1:
        raise ValueError("need gamma_rate > 0 and n_clusters >= 1")
    gaps = _as_rng(rng).exponential(1.0 / gamma_rate, size=int(n_clusters) - 1)
    arrivals = np.concatenate(([0.0], np.cumsum(gaps)))
    keep = arrivals < horizon_ns
    # Zero-length gaps are possible in floating point; keep arrivals strictly increasing.
    keep[1:] &= np.diff(arrivals) > 0
    return arrivals[keep]


def draw_ray_arrivals(zeta_rate, cluster_start_ns, horizon_ns, rng) -> np.ndarray:
    """Ray offsets inside one cluster, starting at 0.

    Rays keep arriving with exponential gaps until the horizon (next cluster
    start or scan end) is reached; the first ray is always emitted.
    """
    if zeta_rate <= 0:
        raise ValueError("zeta_rate must be positive")
    span = horizon_ns - cluster_start_ns
    if span <= 0:
        raise ValueError("cluster_start_ns must lie before horizon_ns")
    rng = _as_rng(rng)
    mean_gap = 1.0 / zeta_rate
    expected = span * zeta_rate
    chunk = int(expected + 6.0 * math.sqrt(expected) + 16)
    offsets = [np.zeros(1)]
    last = 0.0
    while True:
        pos = last + np.cumsum(rng.exponential(mean_gap, size=chunk))
        inside = pos < span
        offsets.append(pos[inside])
        if not inside[-1]:
            break
        last = pos[-1]
    out = np.concatenate(offsets)
    strict = np.concatenate(([True], np.diff(out) > 0))
    return out[strict]


def draw_tap_amplitude(target_mean_power, sigma_a_db, rng, size=None):
    """Lognormal amplitude ``exp(Z)`` whose mean power equals ``target_mean_power``.

    ``Z ~ N(mu, s^2)`` with ``s = sigma_a_db * ln10 / 20`` and
    ``mu = ln(target)/2 - s^2`` so that ``E[a^2] = target``.
    """
    target = np.asarray(target_mean_power, dtype=float)
    if np.any(target <= 0) or sigma_a_db < 0:
        raise ValueError("need target_mean_power > 0 and sigma_a_db >= 0")
    s = amplitude_sigma_ln(sigma_a_db)
    mu = 0.5 * np.log(target) - s * s
    if size is None:
        size = target.shape if target.ndim else None
    z = _as_rng(rng).standard_normal(size) if s > 0 else np.zeros(size if size is not None else ())
    amp = np.exp(mu + s * z)
    if np.ndim(amp) == 0:
        return float(max(amp, _TINY))
    return np.maximum(amp, _TINY)


def jitter_mean(nominal, sigma, rng, floor_fraction=0.1) -> float:
    """Perturb a mean inter-arrival time by N(0, sigma^2) without shifting its mean.

    The normal draw is truncated symmetrically to
    ``[floor_fraction, 2 - floor_fraction] * nominal`` so the perturbed value
    stays positive and its expectation is exactly ``nominal``.
    """
    if sigma <= 0:
        return float(nominal)
    rng = _as_rng(rng)
    half_width = (1.0 - floor_fraction) * nominal
    while True:
        z = rng.normal(0.0, sigma, size=8)
        ok = np.abs(z) <= half_width
        if ok.any():
            return float(nominal + z[np.argmax(ok)])


def draw_fading_amplitudes(params: ScenarioParams, n, rng, path_kind=PathKind.LOS) -> np.ndarray:
    """Small-scale fading amplitudes (unit mean power) of the dominant delay bin.

    LOS bins are Rician with the mean K-factor of the column; NLOS bins have
    no direct component and are Rayleigh.
    """
    rng = _as_rng(rng)
    k = 0.0
    if PathKind(path_kind) is PathKind.LOS:
        if params.multipath.mu_k_db is None:
            raise ValueError("LOS fading needs K-factor statistics")
        k = db_to_power(params.multipath.mu_k_db)
    scatter = np.sqrt(0.5 / (k + 1.0)) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    los = math.sqrt(k / (k + 1.0)) * np.exp(1j * rng.uniform(0.0, TWO_PI))
    return np.abs(los + scatter)


# -- whole-scan synthesis ----------------------------------------------------

@dataclass(frozen=True)
class SynthesisOptions:
    """Switches for the optional stochastic layers of the generator.

    direct_component
        ``None`` follows the scenario (LOS scans get the direct tap).
        ``False`` produces the NLOS-mode realization of a LOS scan.
    diffuse_level
        Draw the per-scan first-tap mean power from the diffuse-power
        statistics; when off the first tap has unit mean power.
    large_scale
        Apply the wind-dependent attenuation to hurricane scans.
    """

    jitter_arrivals: bool = True
    power_jitter: bool = True
    diffuse_level: bool = True
    large_scale: bool = True
    direct_component: Optional[bool] = None


def _structure(mp, scales: ArrivalScales, n_bar, options: SynthesisOptions, rng):
    n = draw_cluster_count(n_bar, mp.sigma_nbar, rng)
    gamma_bar, tau_bar = scales.gamma_bar_ns, scales.tau_bar_ns
    if options.jitter_arrivals:
        gamma_bar = jitter_mean(gamma_bar, mp.sigma_c_ns, rng)
        tau_bar = jitter_mean(tau_bar, mp.sigma_m_ns, rng)
    arrivals = draw_cluster_arrivals(1.0 / gamma_bar, n, rng)
    horizons = np.append(arrivals[1:], SCAN_DURATION_NS)
    offsets, cidx = [], []
    for i, (start, stop) in enumerate(zip(arrivals, horizons)):
        off = draw_ray_arrivals(1.0 / tau_bar, start, stop, rng)
        offsets.append(off)
        cidx.append(np.full(off.size, i + 1, dtype=np.int64))
    counts = np.array([o.size for o in offsets])
    offsets = np.concatenate(offsets)
    cidx = np.concatenate(cidx)
    ridx = np.concatenate([np.arange(1, c + 1) for c in counts])
    cluster_start = np.repeat(arrivals, counts)
    delays = cluster_start + offsets

    # Relative mean power of each ray (first tap of the scan = 1).
    log_power = -cluster_start / mp.lambda_cap - offsets / mp.lambda_ray
    if options.power_jitter:
        x_p = rng.normal(0.0, power_sigma_ln(mp.sigma_p_db), size=arrivals.size)
        x_mp = rng.normal(0.0, power_sigma_ln(mp.sigma_mp_db), size=offsets.size)
        log_power = log_power + np.repeat(x_p, counts) + x_mp
    s = amplitude_sigma_ln(mp.sigma_a_db)
    log_amp = 0.5 * log_power - s * s + s * rng.standard_normal(offsets.size)
    phases = rng.uniform(0.0, TWO_PI, size=offsets.size)
    return arrivals, delays, log_amp, phases, cidx, ridx


def synthesize_cir(scenario: Scenario, params: ScenarioParams, scaling: Optional[HurricaneScaling] = None,
                   options: Optional[SynthesisOptions] = None, seed: int = 0) -> Cir:
    """Draw one scan's impulse response.

    Parameters
    ----------
    scenario : Scenario
        Position / rain / wind of the scan.  Hurricane winds attenuate the
        whole scan by the large-scale law of the column.
    params : ScenarioParams
        Table column for the scenario.
    scaling : HurricaneScaling, optional
        When given, the mean inter-arrival times and the mean cluster count
        come from the base case inflated by the hurricane constants instead
        of the column's measured rates.
    options : SynthesisOptions, optional
    seed : int
        64-bit seed; identical inputs and seed give an identical CIR.
    """
    options = options or SynthesisOptions()
    _check_seed(seed)
    mp = params.multipath
    problems = validate(mp)
    if problems:
        raise ValueError("invalid multipath parameters: " + "; ".join(problems))
    is_los = scenario.path_kind is PathKind.LOS
    if not is_los and mp.has_direct_component:
        raise ValueError("NLOS scenario cannot carry direct-component statistics")
    with_direct = is_los if options.direct_component is None else bool(options.direct_component)
    if with_direct and not is_los:
        raise ValueError("direct component requested for an NLOS scenario")
    if with_direct and not mp.has_direct_component:
        raise ValueError("direct component requested but the parameters have no direct-path statistics")

    if scaling is None:
        scales = ArrivalScales(1.0 / mp.gamma_rate, 1.0 / mp.zeta_rate, mp.gamma_rate, mp.zeta_rate)
        n_bar = mp.n_bar
    else:
        scales = apply_hurricane_scaling(scaling)
        n_bar = scaling.n_bar

    structure_ss, level_ss, direct_ss = np.random.SeedSequence(int(seed)).spawn(3)
    rng = np.random.default_rng(structure_ss)
    arrivals, delays, log_amp, phases, cidx, ridx = _structure(mp, scales, n_bar, options, rng)

    level_rng = np.random.default_rng(level_ss)
    log_level = 0.0
    if options.diffuse_level:
        # First-tap diffuse power 2*A0, A0 lognormal in dB.
        a0_db = level_rng.normal(mp.mu_df_db, mp.sigma_df_db)
        log_level += math.log(2.0) + a0_db * math.log(10.0) / 10.0
    atten_db = 0.0
    if options.large_scale and not scenario.is_reference:
        ls = params.large_scale
        atten_db = ls.mean_attenuation_db(scenario.wind_mph) + level_rng.normal(0.0, ls.sigma_a_db)
        log_level -= atten_db * math.log(10.0) / 10.0
    amplitudes = np.maximum(np.exp(log_amp + 0.5 * log_level), _TINY)

    direct = None
    if with_direct:
        drng = np.random.default_rng(direct_ss)
        x2_db = drng.normal(mp.mu_dr_db, mp.sigma_dr_db) - atten_db
        direct = Tap(float(arrivals[0]), float(max(math.sqrt(db_to_power(x2_db)), _TINY)),
                     float(drng.uniform(0.0, TWO_PI)), 1, 0)

    return Cir(scenario, arrivals, delays, amplitudes, phases, cidx, ridx, direct=direct, seed=int(seed))


@dataclass(frozen=True)
class EnsembleSpec:
    """Everything needed to regenerate an ensemble scan by scan."""

    scenario: Scenario
    params: ScenarioParams
    n_scans: int
    seed: int
    scaling: Optional[HurricaneScaling] = None
    options: SynthesisOptions = SynthesisOptions()

    def scan(self, index: int) -> Cir:
        return synthesize_cir(self.scenario, self.params, self.scaling, self.options,
                              scan_seed(self.seed, index))


def _scan_block(spec: EnsembleSpec, start: int, stop: int) -> list[Cir]:
    return [spec.scan(k) for k in range(start, stop)]


def iter_ensemble(scenario, params, n_scans, seed, scaling=None, options=None) -> Iterator[Cir]:
    """Yield scans in index order without holding the ensemble in memory."""
    spec = EnsembleSpec(scenario, params, int(n_scans), int(seed), scaling, options or SynthesisOptions())
    for k in range(spec.n_scans):
        yield spec.scan(k)


def synthesize_ensemble(scenario, params, n_scans, seed, scaling=None, options=None,
                        workers: int = 1) -> list[Cir]:
    """Synthesize ``n_scans`` scans; scan ``k`` uses ``scan_seed(seed, k)``.

    The result does not depend on ``workers``: each scan owns its stream and
    results are returned in scan-index order.
    """
    if n_scans < 1:
        raise ValueError("n_scans must be at least 1")
    _check_seed(seed)
    spec = EnsembleSpec(scenario, params, int(n_scans), int(seed), scaling, options or SynthesisOptions())
    if workers <= 1:
        return _scan_block(spec, 0, spec.n_scans)
    edges = np.linspace(0, spec.n_scans, min(workers * 4, spec.n_scans) + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        blocks = pool.map(_scan_block, [spec] * (edges.size - 1), edges[:-1], edges[1:])
        return [cir for block in blocks for cir in block]


# -- PDP / waveform level ------------------------------------------------------

def apply_rain(pdp: Pdp, beta, sigma_r_db, rng) -> Pdp:
    """Wind-driven-rain PDP: each bin scaled by ``beta`` plus a random perturbation.

    The perturbation of bin ``n`` is zero-mean Gaussian with standard
    deviation ``beta * P(n) * s``, ``s = sigma_r_db * ln10 / 10``.  Draws are
    truncated symmetrically at ``|z| <= 1/s`` so no bin can go negative and
    the expected bin power stays exactly ``beta * P(n)``.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    if beta == 1.0 and sigma_r_db != 0:
        raise ValueError("beta = 1 is only the identity (sigma_r_db = 0)")
    if sigma_r_db < 0:
        raise ValueError("sigma_r_db must be nonnegative")
    bins = pdp.bins
    if sigma_r_db == 0:
        out = bins * beta if beta != 1.0 else bins.copy()
        return Pdp(out, pdp.scenario, pdp.bin_width_ps)
    s = power_sigma_ln(sigma_r_db)
    rng = _as_rng(rng)
    limit = 1.0 / s
    z = rng.standard_normal(bins.size)
    bad = np.abs(z) > limit
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > limit
    out = beta * bins * (1.0 + s * z)
    return Pdp(np.maximum(out, 0.0), pdp.scenario, pdp.bin_width_ps)


def render_waveform(cir: Cir, template: Optional[PulseTemplate] = None) -> ScanWaveform:
    """Superpose ``a * cos(phi) * template`` at each tap's nearest delay bin."""
    template = template or PulseTemplate.default()
    weights = cir.all_amplitudes() * np.cos(cir.all_phases())
    impulses = np.bincount(delay_to_bin(cir.all_delays()), weights=weights, minlength=N_BINS)
    full = np.convolve(impulses, template.samples)
    return ScanWaveform(full[template.anchor:template.anchor + N_BINS], cir.scenario)
