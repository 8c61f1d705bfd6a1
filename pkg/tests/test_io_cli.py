import json
import math

import numpy as np
import pytest

from hurricane_uwb import io
from hurricane_uwb.cli import main
from hurricane_uwb.params import Position, Rain, Scenario
from hurricane_uwb.synthesis import synthesize_ensemble

P1S1 = Scenario.reference(Position.P1, Rain.S1_NoRain)


@pytest.fixture(scope="module")
def small_ensemble(tables):
    return synthesize_ensemble(P1S1.with_wind(120.0), tables[P1S1.key], 5, 11)


def _synth(out, *extra, scans=20, scenario="P1,S1"):
    return main(["synth", "--out", str(out), "--scans", str(scans), "--scenario", scenario,
                 "--velocities", "90,140", "--seed", "7", *extra])


class TestScanFiles:
    def test_round_trip_exact(self, tmp_path, small_ensemble):
        path = tmp_path / "s.jsonl"
        assert io.write_scans(path, small_ensemble, "abc") == 5
        back = io.read_scans(path)
        for a, b in zip(small_ensemble, back):
            assert a.scenario == b.scenario and a.seed == b.seed
            assert np.array_equal(a.delays_ns, b.delays_ns) and np.array_equal(a.amplitudes, b.amplitudes)
            assert np.array_equal(a.cluster_arrivals_ns, b.cluster_arrivals_ns)
            assert a.direct == b.direct

    def test_nlos_direct_is_null(self, tmp_path, tables):
        p3 = Scenario.reference(Position.P3, Rain.S1_NoRain)
        path = tmp_path / "s.jsonl"
        io.write_scans(path, synthesize_ensemble(p3, tables[p3.key], 2, 1), "h")
        rec = json.loads(path.read_text().splitlines()[1])
        assert rec["direct"] is None

    def test_corrupt_line_reported(self, tmp_path, small_ensemble):
        path = tmp_path / "s.jsonl"
        io.write_scans(path, small_ensemble, "h")
        lines = path.read_text().splitlines()
        lines[3] = lines[3][: len(lines[3]) // 2]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="line 4"):
            io.read_scans(path)

    def test_schema_mismatch(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text('{"schema": "wow-uwb-scans/99"}\n')
        with pytest.raises(io.SchemaError):
            io.read_scans(path)


class TestTables:
    def test_csv_header_and_line_endings(self, tmp_path):
        path = tmp_path / "t.csv"
        io.write_csv(path, io.FIT_SCHEMA, "0123", ("a", "b"), [(0.1, None), (float("inf"), 2)])
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw.startswith(b"# schema=wow-uwb-fit/1; config_hash=0123\n")
        meta, rows = io.read_csv(path, io.FIT_SCHEMA)
        assert meta["config_hash"] == "0123"
        assert rows[0] == {"a": "0.1", "b": "absent"} and float(rows[1]["a"]) == math.inf

    def test_csv_schema_check(self, tmp_path):
        path = tmp_path / "t.csv"
        io.write_csv(path, io.FIT_SCHEMA, "h", ("a",), [])
        with pytest.raises(io.SchemaError):
            io.read_csv(path, io.PDP_SCHEMA)

    def test_config_hash_is_order_independent(self):
        assert io.config_hash({"a": 1, "b": 2}) == io.config_hash({"b": 2, "a": 1})
        assert io.config_hash({"a": 1}) != io.config_hash({"a": 2})

    def test_json_safe(self):
        assert io.json_safe({"x": [float("-inf"), 1.0]}) == {"x": ["-inf", 1.0]}


class TestSynthCommand:
    def test_outputs_and_manifest(self, tmp_path):
        assert _synth(tmp_path) == 0
        man = io.read_json(tmp_path / "manifest.json", io.MANIFEST_SCHEMA)
        assert [f["path"] for f in man["files"]] == ["scans_ref.jsonl", "scans_v090.jsonl", "scans_v140.jsonl"]
        assert man["path_kind"] == "LOS" and man["paired"] is False
        assert len({f["seed"] for f in man["files"]}) == 3
        assert "out" not in man["config"] and "workers" not in man["config"]

    def test_nlos_manifest(self, tmp_path):
        assert _synth(tmp_path, scenario="P3,S2", scans=3) == 0
        assert io.read_json(tmp_path / "manifest.json")["path_kind"] == "NLOS"

    def test_deterministic_across_workers(self, tmp_path):
        assert _synth(tmp_path / "a", "--workers", "1") == 0
        assert _synth(tmp_path / "b", "--workers", "2") == 0
        for name in ("manifest.json", "scans_ref.jsonl", "scans_v090.jsonl", "scans_v140.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_common_seed(self, tmp_path):
        assert _synth(tmp_path, "--common-seed", scans=3) == 0
        man = io.read_json(tmp_path / "manifest.json")
        assert man["paired"] and {f["seed"] for f in man["files"]} == {7}

    @pytest.mark.parametrize("args", [
        ["--scans", "0"], ["--scenario", "P9,S1"], ["--seed", "-1"], ["--velocities", "90,500"],
    ])
    def test_usage_errors(self, tmp_path, args):
        base = ["synth", "--out", str(tmp_path), "--scans", "2", "--velocities", "90"]
        assert main(base + args) == 2

    def test_missing_out(self):
        assert main(["synth", "--scans", "2"]) == 2

    def test_unknown_subcommand(self):
        assert main(["bogus"]) == 2

    def test_config_overrides_flags(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scans": 3, "velocities": "100"}))
        assert main(["synth", "--out", str(tmp_path / "o"), "--scans", "50", "--config", str(cfg)]) == 0
        man = io.read_json(tmp_path / "o" / "manifest.json")
        assert [f["n_scans"] for f in man["files"]] == [3, 3]

    def test_config_unknown_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["synth", "--out", str(tmp_path / "o"), "--config", str(cfg)]) == 2

    def test_waveforms(self, tmp_path):
        assert _synth(tmp_path, "--waveforms", scans=2) == 0
        meta, rows = io.read_csv(tmp_path / "waveforms_ref.csv", io.WAVEFORM_SCHEMA)
        assert len(rows) == 2 * 1639


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert _synth(d, scans=40) == 0
    return d


class TestAnalyzeAndFit:
    def test_analyze(self, synth_dir, tmp_path):
        assert main(["analyze", "--input", str(synth_dir), "--out", str(tmp_path)]) == 0
        _, att = io.read_csv(tmp_path / "attenuation.csv", io.ATTENUATION_SCHEMA)
        assert [float(r["wind_mph"]) for r in att] == [90.0, 140.0]
        _, samples = io.read_csv(tmp_path / "attenuation_samples.csv")
        assert len(samples) == 80
        assert len(list((tmp_path / "pdp" / "v090").glob("*.csv"))) == 40
        _, ks = io.read_csv(tmp_path / "k_factor.csv", io.KFACTOR_SCHEMA)
        assert all(r["mu_k_db"] != "absent" for r in ks)
        clusters = io.read_json(tmp_path / "clusters.json", io.CLUSTERS_SCHEMA)
        assert len(clusters["ensembles"]["ref"]) == 40

    def test_analyze_nlos_k_absent(self, tmp_path):
        assert _synth(tmp_path / "s", scenario="P3,S1", scans=5) == 0
        assert main(["analyze", "--input", str(tmp_path / "s"), "--out", str(tmp_path / "a"), "--no-pdp"]) == 0
        _, ks = io.read_csv(tmp_path / "a" / "k_factor.csv")
        assert ks and all(r["mu_k_db"] == "absent" for r in ks)
        assert not (tmp_path / "a" / "pdp").exists()

    def test_analyze_hash_independent_of_location(self, synth_dir, tmp_path):
        import shutil
        shutil.copytree(synth_dir, tmp_path / "copy")
        for src, out in ((synth_dir, "a"), (tmp_path / "copy", "b")):
            assert main(["analyze", "--input", str(src), "--out", str(tmp_path / out), "--no-pdp"]) == 0
        assert (tmp_path / "a" / "mpc_summary.csv").read_bytes() == (tmp_path / "b" / "mpc_summary.csv").read_bytes()

    def test_analyze_missing_input(self, tmp_path):
        assert main(["analyze", "--input", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2

    def test_fit(self, synth_dir, tmp_path):
        assert main(["fit", "--input", str(synth_dir), "--out", str(tmp_path)]) == 0
        doc = io.read_json(tmp_path / "fit.json", io.FIT_SCHEMA)
        assert {"large_scale", "multipath", "small_scale"} <= set(doc)
        assert "alpha" in doc["large_scale"]["estimates"]
        meta, rows = io.read_csv(tmp_path / "fit.csv", io.FIT_SCHEMA)
        assert meta["config_hash"] == doc["config_hash"] and rows


class TestRoundtripCommand:
    def test_tight_tolerance_fails(self, tmp_path):
        assert main(["roundtrip", "--out", str(tmp_path), "--scans", "200", "--tolerance", "0.0001"]) == 1
        doc = io.read_json(tmp_path / "roundtrip.json", io.ROUNDTRIP_SCHEMA)
        assert doc["passed"] is False
        _, rows = io.read_csv(tmp_path / "roundtrip.csv", io.ROUNDTRIP_SCHEMA)
        assert {r["parameter"] for r in rows} >= {"n_bar", "gamma_rate", "zeta_rate", "lambda_cap", "lambda_ray"}

    def test_nonpositive_tolerance(self, tmp_path):
        assert main(["roundtrip", "--out", str(tmp_path), "--scans", "10", "--tolerance", "0"]) == 2

    def test_bad_params_file(self, tmp_path):
        bad = tmp_path / "p.json"
        bad.write_text("{}")
        assert main(["roundtrip", "--out", str(tmp_path), "--scans", "10", "--params", str(bad)]) == 2
