import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hurricane_uwb.analysis import (
    AttenuationSample, ClusterIdentifier, CleanDeconvolver, RicianKFactorEstimator, anchor_amplitude,
    cir_k_factor_db, clean_deconvolve, compute_pdp, count_significant_mpcs, empirical_attenuation,
    estimate_k_factor, identify_clusters, mean_pdp, per_scan_attenuation, segmentation_from_cir,
    significant_mpc_profile, static_background_subtract,
)
from hurricane_uwb.channel import Cir, Pdp, PulseTemplate, ScanWaveform, Tap
from hurricane_uwb.params import BIN_WIDTH_NS, N_BINS, Position, Rain, Scenario
from hurricane_uwb.synthesis import iter_ensemble, render_waveform, synthesize_cir

from oracles import SCENARIO, exponential_bursts, forced_gap_cir, rayleigh_envelope, rician_envelope, separated_taps

P1S1 = Scenario.reference(Position.P1, Rain.S1_NoRain)


def cir_of(amplitudes, delays=None):
    delays = delays if delays is not None else [0.5 * (i + 1) for i in range(len(amplitudes))]
    return Cir.from_taps(SCENARIO, [Tap(d, a, 0.0, 1, i + 1) for i, (d, a) in enumerate(zip(delays, amplitudes))])


class TestComputePdp:
    def test_single_tap(self):
        pdp = compute_pdp(cir_of([2.0], [5.0]))
        assert pdp.bins[82] == 4.0 and np.count_nonzero(pdp.bins) == 1

    def test_minimal_cir(self):
        assert compute_pdp(cir_of([1.0], [0.0])).total_energy == 1.0

    @pytest.mark.parametrize("seed", range(5))
    def test_energy_conservation(self, tables, seed):
        cir = synthesize_cir(P1S1, tables[P1S1.key], seed=seed)
        direct = math.fsum(cir.all_amplitudes() ** 2)
        assert abs(compute_pdp(cir).total_energy - direct) <= 1e-12 * direct

    def test_direct_tap_optional(self, tables):
        cir = synthesize_cir(P1S1, tables[P1S1.key], seed=1)
        assert compute_pdp(cir, include_direct=False).total_energy < compute_pdp(cir).total_energy

    @given(st.lists(st.tuples(st.floats(0, 99.9), st.floats(1e-3, 1e3)), min_size=1, max_size=40))
    def test_energy_conservation_any_taps(self, pairs):
        pairs = sorted(pairs)
        delays = []
        for d, _ in pairs:
            delays.append(d if not delays or d > delays[-1] else np.nextafter(delays[-1], 100.0))
        cir = cir_of([a for _, a in pairs], delays)
        expected = math.fsum(a * a for _, a in pairs)
        assert math.isclose(compute_pdp(cir).total_energy, expected, rel_tol=1e-12)


class TestAttenuation:
    def _ens(self, rng, scale=1.0, n=20):
        return [Pdp(scale * rng.exponential(1.0, N_BINS)) for _ in range(n)]

    def test_identical_ensembles(self, rng):
        ens = self._ens(rng)
        assert empirical_attenuation(ens, ens).attenuation_db == 0.0

    def test_decade(self, rng):
        ref = self._ens(rng)
        ens = [Pdp(p.bins / 10) for p in ref]
        assert math.isclose(empirical_attenuation(ens, ref).attenuation_db, 10.0, rel_tol=1e-12)

    def test_zero_energy_rejected(self, rng):
        with pytest.raises(ValueError):
            empirical_attenuation([Pdp(np.zeros(N_BINS))], self._ens(rng))

    def test_empty_rejected(self, rng):
        with pytest.raises(ValueError):
            empirical_attenuation([], self._ens(rng))

    @staticmethod
    def _paired_90mph(tables, n=400):
        # Paired scans share everything but the attenuation draw.
        sp = tables[P1S1.key]
        ref = [compute_pdp(c) for c in iter_ensemble(P1S1, sp, n, 17)]
        hur = [compute_pdp(c) for c in iter_ensemble(P1S1.with_wind(90.0), sp, n, 17)]
        att = np.array([s.attenuation_db for s in per_scan_attenuation(hur, ref, paired=True)])
        return att, sp.large_scale.sigma_a_db / math.sqrt(n)

    @pytest.mark.xfail(strict=False, reason="one-standard-error band: misses for about a third of seeds")
    def test_matches_wind_law_at_90_mph_one_se(self, tables):
        att, se = self._paired_90mph(tables)
        assert math.isclose(-11.7 + 0.182 * 90, 4.68)
        assert abs(att.mean() - 4.68) < se

    def test_matches_wind_law_at_90_mph(self, tables):
        att, se = self._paired_90mph(tables)
        assert abs(att.mean() - 4.68) < 3 * se

    def test_sample_validation(self):
        with pytest.raises(ValueError):
            AttenuationSample(90.0, float("nan"))
        assert math.isnan(AttenuationSample(float("nan"), 1.0).wind_mph)


class TestBackgroundSubtract:
    def test_mean_background(self, rng):
        ens = [Pdp(rng.exponential(1.0, N_BINS)) for _ in range(5)]
        bg = mean_pdp(ens)
        res = static_background_subtract(ens, bg)
        # Negative residuals clamp, so compare against the clamped oracle.
        expected = np.mean([np.maximum(p.bins - bg.bins, 0) for p in ens], axis=0)
        assert np.allclose(np.mean([r.bins for r in res], axis=0), expected)
        same = static_background_subtract([bg], bg)[0]
        assert not np.any(same.bins)

    def test_zero_background_identity(self, rng):
        p = Pdp(rng.exponential(1.0, N_BINS))
        assert np.array_equal(static_background_subtract([p], Pdp(np.zeros(N_BINS)))[0].bins, p.bins)

    def test_clamp(self):
        p = Pdp(np.ones(N_BINS))
        bg = np.zeros(N_BINS)
        bg[10] = 5.0
        assert static_background_subtract([p], Pdp(bg))[0].bins[10] == 0.0

    def test_grid_mismatch(self):
        with pytest.raises(ValueError, match="grid"):
            static_background_subtract([Pdp(np.ones(10))], Pdp(np.ones(11)))


class TestIdentifyClusters:
    def test_two_bursts_with_silent_gap(self):
        p = exponential_bursts([5.0, 5.0 + 20.0 + 30.0], [1.0, 0.5], 2.3)
        # Silence the 20 ns after the first burst has decayed for 30 ns.
        t = np.arange(N_BINS) * BIN_WIDTH_NS
        p[(t > 35.0) & (t < 55.0)] = 0.0
        assert identify_clusters(Pdp(p)).count == 2

    def test_single_burst(self):
        assert identify_clusters(Pdp(exponential_bursts([3.0], [1.0], 2.3))).count == 1

    def test_all_zero(self):
        assert identify_clusters(Pdp(np.zeros(N_BINS))).count == 0

    @pytest.mark.parametrize("n", range(1, 7))
    def test_forced_gap_oracle(self, n):
        rng = np.random.default_rng(100 + n)
        hits = sum(identify_clusters(compute_pdp(forced_gap_cir(n, rng)[0])).count == n for _ in range(30))
        assert hits >= 28

    def test_segments_partition_active_bins(self):
        rng = np.random.default_rng(3)
        cir, _ = forced_gap_cir(4, rng)
        pdp = compute_pdp(cir)
        seg = identify_clusters(pdp)
        active = np.flatnonzero(pdp.bins >= 1e-6 * pdp.bins.max())
        owner = np.zeros(N_BINS, dtype=int)
        for s, e, _ in seg.boundaries:
            owner[s:e + 1] += 1
        assert np.all(owner[active] == 1)
        starts = [b[0] for b in seg.boundaries]
        assert starts == sorted(starts)

    def test_detected_starts_near_truth(self):
        rng = np.random.default_rng(4)
        cir, starts = forced_gap_cir(5, rng)
        seg = identify_clusters(compute_pdp(cir))
        found = np.array([b[0] for b in seg.boundaries]) * BIN_WIDTH_NS
        assert found.size == 5 and np.all(np.abs(found - starts) < 1.0)

    def test_margin_configurable(self):
        p = exponential_bursts([5.0, 25.0], [1.0, 1.0], 2.3)
        assert identify_clusters(Pdp(p)).count == 2
        assert identify_clusters(Pdp(p), margin_db=200.0).count == 1

    def test_estimator_wrapper(self):
        pdps = [Pdp(exponential_bursts([3.0], [1.0], 2.3))]
        est = ClusterIdentifier(margin_db=6.0)
        assert est.get_params()["margin_db"] == 6.0
        assert est.fit_predict(pdps)[0].count == 1

    def test_ground_truth_segmentation(self, tables):
        cir = synthesize_cir(P1S1, tables[P1S1.key], seed=9)
        seg = segmentation_from_cir(cir)
        assert seg.count == cir.n_clusters


class TestSignificantMpcs:
    def test_examples(self):
        assert count_significant_mpcs(cir_of([1.0, 0.2, 0.1])) == 2
        assert count_significant_mpcs(cir_of([1.0])) == 1

    @given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=30), st.floats(1e-3, 1e3))
    def test_scale_invariant(self, amps, c):
        base = count_significant_mpcs(cir_of(amps))
        assert count_significant_mpcs(cir_of([a * c for a in amps])) == base

    def test_external_reference(self):
        assert count_significant_mpcs(cir_of([1.0, 0.2, 0.1]), reference_amplitude=10.0) == 0

    def test_profile_normalised_to_anchor(self):
        ens = {"a": [cir_of([1.0, 0.5, 0.01])], "b": [cir_of([0.2, 0.05])]}
        prof = significant_mpc_profile(ens, "a")
        assert prof["a"] == (2.0, 1.0) and prof["b"] == (1.0, 0.5)
        assert anchor_amplitude(ens["a"]) == 1.0


class TestClean:
    def test_single_impulse(self):
        t = PulseTemplate.impulse()
        taps = clean_deconvolve(render_waveform(cir_of([1.0], [82 * BIN_WIDTH_NS]), t), t)
        assert len(taps) == 1
        assert round(taps[0].delay_ns / BIN_WIDTH_NS) == 82 and taps[0].amplitude == 1.0

    def test_zero_waveform(self):
        assert clean_deconvolve(ScanWaveform(np.zeros(N_BINS))) == []

    def test_zero_template_rejected(self):
        with pytest.raises(ValueError):
            clean_deconvolve(ScanWaveform(np.ones(N_BINS)), PulseTemplate(np.zeros(4)))

    def test_three_taps(self):
        rng = np.random.default_rng(8)
        t = PulseTemplate.default()
        cir, bins = separated_taps(rng)
        taps = clean_deconvolve(render_waveform(cir, t), t)
        assert len(taps) == 3
        got = sorted(taps, key=lambda x: x.delay_ns)
        for tap, b, ref in zip(got, bins, sorted(cir.taps, key=lambda x: x.delay_ns)):
            assert abs(round(tap.delay_ns / BIN_WIDTH_NS) - b) <= 1
            assert abs(tap.amplitude - ref.amplitude) < 0.01 * ref.amplitude
            assert math.isclose(math.cos(tap.phase_rad), math.cos(ref.phase_rad))

    def test_sorted_by_delay(self):
        rng = np.random.default_rng(9)
        cir, _ = separated_taps(rng, amplitudes=(0.3, 1.0, 0.5, 0.8))
        taps = clean_deconvolve(render_waveform(cir))
        assert [t.delay_ns for t in taps] == sorted(t.delay_ns for t in taps)

    def test_tap_at_scan_edge(self):
        t = PulseTemplate.default()
        cir = cir_of([1.0], [(N_BINS - 2) * BIN_WIDTH_NS])
        taps = clean_deconvolve(render_waveform(cir, t), t)
        assert round(taps[0].delay_ns / BIN_WIDTH_NS) == N_BINS - 2

    def test_max_iters_respected(self):
        rng = np.random.default_rng(10)
        w = ScanWaveform(rng.standard_normal(N_BINS))
        assert len(clean_deconvolve(w, max_iters=5)) <= 5

    def test_transformer(self):
        rng = np.random.default_rng(11)
        cir, _ = separated_taps(rng)
        dec = CleanDeconvolver(stop_fraction=0.1).fit()
        assert len(dec.transform([render_waveform(cir)])[0]) == 3
        assert set(dec.get_params()) == {"template", "stop_fraction", "max_iters"}


class TestKFactor:
    def test_rayleigh(self):
        k = estimate_k_factor(rayleigh_envelope(100_000, np.random.default_rng(0), scale=3.7))
        assert k.k_linear < 0.05

    def test_rician_6db(self):
        k = estimate_k_factor(rician_envelope(10 ** 0.6, 100_000, np.random.default_rng(1)))
        assert abs(k.k_db - 6.0) < 1.0

    def test_constant_saturates(self):
        k = estimate_k_factor(np.full(500, 2.0))
        assert k.saturated and math.isinf(k.k_linear)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            estimate_k_factor(np.ones(10))

    @pytest.mark.parametrize("k_db", [0.0, 3.0, 10.0, 15.0])
    def test_recovers_range(self, k_db):
        est = estimate_k_factor(rician_envelope(10 ** (k_db / 10), 200_000, np.random.default_rng(2)))
        assert abs(est.k_db - k_db) < 1.0

    def test_estimator_wrapper(self):
        est = RicianKFactorEstimator().fit(rician_envelope(10.0, 50_000, np.random.default_rng(3)))
        assert abs(est.k_db_ - 10.0) < 1.0 and not est.saturated_

    def test_cir_ratio(self):
        cir = Cir.from_taps(SCENARIO, [Tap(0.0, 2.0, 0.0, 1, 0), Tap(0.0, 1.0, 0.0, 1, 1)])
        assert math.isclose(cir_k_factor_db(cir), 10 * math.log10(4.0))
        assert cir_k_factor_db(cir_of([1.0])) is None
