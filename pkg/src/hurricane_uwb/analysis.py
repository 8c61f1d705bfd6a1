"""Per-scan and per-ensemble quantities derived from CIRs, PDPs and waveforms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d
from sklearn.base import BaseEstimator, TransformerMixin

from .channel import Cir, Pdp, PulseTemplate, ScanWaveform, Tap, delay_to_bin
from .params import BIN_WIDTH_NS, N_BINS, Scenario


def compute_pdp(cir: Cir, include_direct: bool = True) -> Pdp:
    """Bin tap powers onto the scan grid.

    Taps falling into the same bin add, so the PDP energy equals the sum of
    squared tap amplitudes.
    """
    if include_direct:
        delays, amps = cir.all_delays(), cir.all_amplitudes()
    else:
        delays, amps = cir.delays_ns, cir.amplitudes
    bins = np.bincount(delay_to_bin(delays), weights=amps ** 2, minlength=N_BINS)
    return Pdp(bins, cir.scenario)


# -- large-scale attenuation ---------------------------------------------------

@dataclass(frozen=True)
class AttenuationSample:
    """One attenuation value; ``wind_mph`` is NaN when the PDPs carry no scenario."""

    wind_mph: float
    attenuation_db: float
    scenario: Optional[Scenario] = None

    def __post_init__(self):
        if not math.isfinite(self.attenuation_db) or math.isinf(self.wind_mph):
            raise ValueError("attenuation samples must be finite")


def _energies(pdps: Sequence[Pdp]) -> np.ndarray:
    if len(pdps) == 0:
        raise ValueError("empty PDP ensemble")
    return np.array([p.total_energy for p in pdps])


def empirical_attenuation(ensemble: Sequence[Pdp], reference: Sequence[Pdp]) -> AttenuationSample:
    """``10 log10(E_ref / E_v)`` with both energies summed over all scans and bins."""
    e_v = float(np.sum(_energies(ensemble)))
    e_ref = float(np.sum(_energies(reference)))
    if e_v <= 0 or e_ref <= 0:
        raise ValueError("attenuation needs ensembles with positive total energy")
    # Ensemble sizes may differ; compare energy per scan.
    ratio = (e_ref / len(reference)) / (e_v / len(ensemble))
    scenario = ensemble[0].scenario
    wind = scenario.wind_mph if scenario is not None else float("nan")
    return AttenuationSample(wind, 10.0 * math.log10(ratio), scenario)


def per_scan_attenuation(ensemble: Sequence[Pdp], reference: Sequence[Pdp], paired: bool = False) -> list[AttenuationSample]:
    """One attenuation value per hurricane scan.

    With ``paired=True`` scan ``k`` is compared with reference scan ``k``;
    otherwise every scan is compared with the mean reference energy.
    """
    e_v = _energies(ensemble)
    e_ref = _energies(reference)
    if np.any(e_v <= 0) or np.any(e_ref <= 0):
        raise ValueError("attenuation needs scans with positive energy")
    if paired:
        if e_v.size != e_ref.size:
            raise ValueError("paired attenuation needs equally sized ensembles")
        att = 10.0 * np.log10(e_ref / e_v)
    else:
        att = 10.0 * np.log10(np.mean(e_ref) / e_v)
    out = []
    for pdp, a in zip(ensemble, att):
        wind = pdp.scenario.wind_mph if pdp.scenario is not None else float("nan")
        out.append(AttenuationSample(wind, float(a), pdp.scenario))
    return out


def static_background_subtract(ensemble: Sequence[Pdp], background: Pdp) -> list[Pdp]:
    """Remove a static-environment PDP from every scan, clamping at zero."""
    out = []
    for pdp in ensemble:
        if pdp.bins.shape != background.bins.shape or pdp.bin_width_ps != background.bin_width_ps:
            raise ValueError("PDP grid does not match the background grid")
        out.append(Pdp(np.maximum(pdp.bins - background.bins, 0.0), pdp.scenario, pdp.bin_width_ps))
    return out


def mean_pdp(ensemble: Sequence[Pdp]) -> Pdp:
    if len(ensemble) == 0:
        raise ValueError("empty PDP ensemble")
    return Pdp(np.mean([p.bins for p in ensemble], axis=0), ensemble[0].scenario, ensemble[0].bin_width_ps)


# -- cluster identification ----------------------------------------------------

@dataclass(frozen=True)
class ClusterSegmentation:
    """Ordered, non-overlapping ``(start_bin, end_bin, peak_power)`` segments."""

    boundaries: tuple = ()

    @property
    def count(self) -> int:
        return len(self.boundaries)


def identify_clusters(pdp: Pdp, margin_db: float = 6.0, min_gap_ns: float = 1.0,
                      floor: float = 1e-6, smooth_bins: int = 5) -> ClusterSegmentation:
    """Split a PDP into clusters.

    Bins below ``floor * peak`` are silence.  Inside a cluster the smoothed
    profile is compared with an exponential envelope fitted (in dB) from the
    cluster peak onwards; a local maximum rising more than ``margin_db``
    above that envelope at least ``min_gap_ns`` after the cluster start opens
    a new cluster at the preceding valley.  A silent run of ``min_gap_ns``
    also closes the current cluster.
    """
    p = pdp.bins
    peak = float(p.max()) if p.size else 0.0
    if peak <= 0:
        return ClusterSegmentation(())
    width_ns = pdp.bin_width_ps / 1000.0
    min_gap = max(1, int(round(min_gap_ns / width_ns)))
    active = p >= floor * peak
    s = np.maximum(uniform_filter1d(p, size=max(1, smooth_bins), mode="constant"), 0.0)
    with np.errstate(divide="ignore"):
        s_db = 10.0 * np.log10(s)
    h = max(1, smooth_bins // 2)
    n = p.size

    starts = []
    cur_start = None
    peak_idx = peak_db = None
    sums = None
    silent_run = 0

    def open_cluster(k):
        nonlocal cur_start, peak_idx, peak_db, sums
        starts.append(k)
        cur_start = k
        peak_idx, peak_db = k, s_db[k]
        sums = np.zeros(5)

    def envelope(k):
        cnt, sx, sy, sxx, sxy = sums
        if cnt < 4 * min_gap:
            return peak_db
        den = cnt * sxx - sx * sx
        slope = min(0.0, (cnt * sxy - sx * sy) / den) if den > 0 else 0.0
        intercept = (sy - slope * sx) / cnt
        return intercept + slope * (k - peak_idx)

    for k in range(n):
        if not active[k]:
            silent_run += 1
            if cur_start is not None and silent_run >= min_gap:
                cur_start = None
            continue
        silent_run = 0
        if cur_start is None:
            open_cluster(k)
            continue
        if k - cur_start < min_gap:
            if s_db[k] > peak_db:
                peak_idx, peak_db = k, s_db[k]
                sums[:] = 0.0
        else:
            lo, hi = max(0, k - h), min(n, k + h + 1)
            is_local_max = s_db[k] >= s_db[lo:hi].max()
            if is_local_max and s_db[k] > envelope(k) + margin_db:
                j = k
                while j - 1 > cur_start and s_db[j - 1] < s_db[j] and active[j - 1]:
                    j -= 1
                open_cluster(j)
                # Re-accumulate the envelope from the new peak.
                peak_idx, peak_db = k, s_db[k]
                continue
        if k >= peak_idx and np.isfinite(s_db[k]):
            sums += (1.0, k - peak_idx, s_db[k], (k - peak_idx) ** 2, (k - peak_idx) * s_db[k])

    active_idx = np.flatnonzero(active)
    spans = []
    for i, st in enumerate(starts):
        stop = starts[i + 1] if i + 1 < len(starts) else n
        members = active_idx[(active_idx >= st) & (active_idx < stop)]
        spans.append([int(st), int(members[-1])])
    # Short blips, or segments never rising a margin above the floor, are
    # noise crossing the floor; fold them into the preceding cluster (or
    # the following one at the start).
    weak = floor * peak * 10.0 ** (margin_db / 10.0)
    merged = []
    for span in spans:
        short = span[1] - span[0] + 1 < min_gap
        if merged and (short or p[span[0]:span[1] + 1].max() < weak):
            merged[-1][1] = span[1]
        else:
            merged.append(span)
    if len(merged) > 1 and merged[0][1] - merged[0][0] + 1 < min_gap:
        merged[1][0] = merged[0][0]
        merged.pop(0)
    bounds = tuple((st, end, float(p[st:end + 1].max())) for st, end in merged)
    return ClusterSegmentation(bounds)


def segmentation_from_cir(cir: Cir, pdp: Optional[Pdp] = None) -> ClusterSegmentation:
    """Ground-truth segmentation from a synthesized CIR's cluster arrivals."""
    pdp = pdp if pdp is not None else compute_pdp(cir, include_direct=False)
    starts = delay_to_bin(cir.cluster_arrivals_ns)
    bounds = []
    for i, st in enumerate(starts):
        stop = int(starts[i + 1]) if i + 1 < starts.size else N_BINS
        if stop <= st:
            continue
        bounds.append((int(st), stop - 1, float(pdp.bins[st:stop].max())))
    return ClusterSegmentation(tuple(bounds))


class ClusterIdentifier(BaseEstimator):
    """Estimator wrapper around :func:`identify_clusters`."""

    def __init__(self, margin_db=6.0, min_gap_ns=1.0, floor=1e-6, smooth_bins=5):
        self.margin_db = margin_db
        self.min_gap_ns = min_gap_ns
        self.floor = floor
        self.smooth_bins = smooth_bins

    def fit(self, X=None, y=None):
        return self

    def predict(self, pdps):
        return [identify_clusters(p, self.margin_db, self.min_gap_ns, self.floor, self.smooth_bins)
                for p in pdps]

    def fit_predict(self, pdps, y=None):
        return self.fit().predict(pdps)


# -- significant multipath components ---------------------------------------------

def count_significant_mpcs(cir: Cir, threshold_fraction: float = 0.15,
                           reference_amplitude: Optional[float] = None) -> int:
    """Number of taps with amplitude at least ``threshold_fraction`` of a reference.

    The reference defaults to the scan's own strongest tap, so the count is
    at least one and invariant to a common amplitude scale.
    """
    amps = cir.all_amplitudes()
    if amps.size == 0:
        raise ValueError("CIR has no taps")
    ref = float(amps.max()) if reference_amplitude is None else float(reference_amplitude)
    return int(np.count_nonzero(amps >= threshold_fraction * ref))


def anchor_amplitude(anchor_ensemble: Sequence[Cir]) -> float:
    """Typical peak amplitude of an anchor ensemble (median of per-scan maxima)."""
    return float(np.median([c.all_amplitudes().max() for c in anchor_ensemble]))


def significant_mpc_profile(ensembles: dict, anchor_key, threshold_fraction: float = 0.15) -> dict:
    """Mean significant-MPC count per ensemble against one common threshold.

    The threshold is ``threshold_fraction`` of the anchor ensemble's typical
    peak amplitude, and the returned means are normalised to the anchor's.
    Returns ``{key: (mean_count, normalised)}``.
    """
    ref = anchor_amplitude(ensembles[anchor_key])
    means = {
        key: float(np.mean([count_significant_mpcs(c, threshold_fraction, ref) for c in cirs]))
        for key, cirs in ensembles.items()
    }
    base = means[anchor_key]
    return {key: (m, m / base if base > 0 else float("nan")) for key, m in means.items()}


# -- CLEAN deconvolution ------------------------------------------------------------

def clean_deconvolve(waveform: ScanWaveform, template: Optional[PulseTemplate] = None,
                     stop_fraction: float = 0.10, max_iters: int = 200) -> list[Tap]:
    """Recover sparse taps from a received scan by iterative template subtraction.

    Each iteration picks the lag with the largest normalised cross-correlation
    between the residual and the template, records the least-squares tap
    amplitude there and subtracts the scaled template.  Iteration stops once
    the residual peak falls below ``stop_fraction`` of the original peak.
    Taps found twice at the same bin are merged; the result is sorted by
    delay with phase 0 (positive) or pi (negative).
    """
    template = template or PulseTemplate.default()
    if template.is_zero:
        raise ValueError("CLEAN template must be nonzero")
    x = np.array(waveform.samples, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("waveform must be finite")
    peak0 = float(np.max(np.abs(x))) if x.size else 0.0
    if peak0 == 0.0:
        return []
    t = template.samples
    anchor = template.anchor
    n = x.size
    offset = t.size - 1 - anchor
    # Template energy actually overlapping the scan for a tap at each bin.
    overlap = np.correlate(np.ones(n), t * t, "full")[offset:offset + n]
    found = {}
    for _ in range(int(max_iters)):
        if np.max(np.abs(x)) < stop_fraction * peak0:
            break
        corr = np.correlate(x, t, "full")[offset:offset + n]
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where(overlap > 0, np.abs(corr) / np.sqrt(overlap), 0.0)
        b = int(np.argmax(score))
        if score[b] == 0.0:
            break
        amp = corr[b] / overlap[b]
        start = b - anchor
        lo, hi = max(0, -start), min(t.size, n - start)
        x[start + lo:start + hi] -= amp * t[lo:hi]
        found[b] = found.get(b, 0.0) + amp
    taps = []
    for ray, b in enumerate(sorted(k for k, v in found.items() if v != 0.0), start=1):
        amp = found[b]
        taps.append(Tap(b * BIN_WIDTH_NS, abs(amp), 0.0 if amp > 0 else math.pi, 1, ray))
    return taps


class CleanDeconvolver(BaseEstimator, TransformerMixin):
    def __init__(self, template=None, stop_fraction=0.10, max_iters=200):
        self.template = template
        self.stop_fraction = stop_fraction
        self.max_iters = max_iters

    def fit(self, X=None, y=None):
        template = self.template if self.template is not None else PulseTemplate.default()
        if template.is_zero:
            raise ValueError("CLEAN template must be nonzero")
        self.template_ = template
        return self

    def transform(self, waveforms):
        if not hasattr(self, "template_"):
            self.fit()
        return [clean_deconvolve(w, self.template_, self.stop_fraction, self.max_iters) for w in waveforms]


# -- Rician K-factor ---------------------------------------------------------------

@dataclass(frozen=True)
class KFactorEstimate:
    k_linear: float
    k_db: float
    saturated: bool = False
    n_samples: int = 0
    moment_ratio: float = float("nan")


def estimate_k_factor(amplitude_samples, min_samples: int = 100, z_threshold: float = 3.0) -> KFactorEstimate:
    """Moment-based Rician K-factor from envelope samples.

    Uses ``R = E[r^4] / E[r^2]^2 = 1 + 2u - u^2`` with ``u = 1/(K+1)``, so
    ``K = sqrt(2 - R) / (1 - sqrt(2 - R))``.  When ``2 - R`` is not
    significantly positive (below ``z_threshold`` standard errors) the
    sample is indistinguishable from Rayleigh and K = 0 is returned.  A
    zero-variance envelope has no diffuse power: K = +inf, flagged saturated.
    """
    r = np.asarray(amplitude_samples, dtype=float).ravel()
    if r.size < min_samples:
        raise ValueError(f"K-factor estimation needs at least {min_samples} samples, got {r.size}")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("envelope samples must be finite and nonnegative")
    p = r * r
    m2 = float(np.mean(p))
    if m2 == 0:
        raise ValueError("all-zero envelope")
    if float(np.max(p) - np.min(p)) <= 1e-12 * m2:
        return KFactorEstimate(math.inf, math.inf, True, r.size, 1.0)
    m4 = float(np.mean(p * p))
    ratio = m4 / (m2 * m2)
    # Delta-method standard error of the moment ratio.
    infl = (p * p - 2.0 * ratio * m2 * p) / (m2 * m2)
    se = float(np.std(infl, ddof=1)) / math.sqrt(r.size)
    excess = 2.0 - ratio
    if excess <= z_threshold * se or excess <= 0:
        return KFactorEstimate(0.0, -math.inf, False, r.size, ratio)
    root = math.sqrt(excess)
    if root >= 1.0:
        return KFactorEstimate(math.inf, math.inf, True, r.size, ratio)
    k = root / (1.0 - root)
    return KFactorEstimate(k, 10.0 * math.log10(k), False, r.size, ratio)


class RicianKFactorEstimator(BaseEstimator):
    def __init__(self, min_samples=100, z_threshold=3.0):
        self.min_samples = min_samples
        self.z_threshold = z_threshold

    def fit(self, X, y=None):
        est = estimate_k_factor(X, self.min_samples, self.z_threshold)
        self.k_linear_ = est.k_linear
        self.k_db_ = est.k_db
        self.saturated_ = est.saturated
        return self


def cir_k_factor_db(cir: Cir) -> Optional[float]:
    """Direct-to-scattered power ratio of one scan in dB (``None`` without a direct tap)."""
    if cir.direct is None:
        return None
    diffuse = cir.diffuse_energy()
    if diffuse <= 0:
        return math.inf
    return 10.0 * math.log10(cir.direct_power / diffuse)
