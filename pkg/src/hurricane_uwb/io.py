"""File formats: JSON-lines scan ensembles, CSV tables and JSON reports.

All writers are byte-deterministic: keys are sorted, floats use Python's
shortest round-trip repr, line endings are LF.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .channel import Cir, Pdp, Tap
from .params import Scenario

SCANS_SCHEMA = "wow-uwb-scans/1"
MANIFEST_SCHEMA = "wow-uwb-manifest/1"
PDP_SCHEMA = "wow-uwb-pdp/1"
WAVEFORM_SCHEMA = "wow-uwb-waveform/1"
ATTENUATION_SCHEMA = "wow-uwb-attenuation/1"
MPC_SCHEMA = "wow-uwb-mpc/1"
KFACTOR_SCHEMA = "wow-uwb-kfactor/1"
CLUSTERS_SCHEMA = "wow-uwb-clusters/1"
FIT_SCHEMA = "wow-uwb-fit/1"
ROUNDTRIP_SCHEMA = "wow-uwb-roundtrip/1"

ABSENT = "absent"


class SchemaError(ValueError):
    """A file declares a schema version this package does not read."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:16]


def _fmt(value) -> str:
    if value is None:
        return ABSENT
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


# -- scan ensembles ----------------------------------------------------------------

def cir_to_record(cir: Cir) -> dict:
    d = cir.direct
    return {
        "scenario": cir.scenario.to_dict(),
        "seed": cir.seed,
        "cluster_arrivals_ns": cir.cluster_arrivals_ns.tolist(),
        "direct": None if d is None else {"delay_ns": d.delay_ns, "amplitude": d.amplitude, "phase_rad": d.phase_rad},
        "rays": {
            "delays_ns": cir.delays_ns.tolist(),
            "amplitudes": cir.amplitudes.tolist(),
            "phases_rad": cir.phases_rad.tolist(),
            "cluster_index": cir.cluster_index.tolist(),
            "ray_index": cir.ray_index.tolist(),
        },
    }


def cir_from_record(rec: dict) -> Cir:
    d = rec["direct"]
    direct = None if d is None else Tap(d["delay_ns"], d["amplitude"], d["phase_rad"], 1, 0)
    r = rec["rays"]
    return Cir(Scenario.from_dict(rec["scenario"]), rec["cluster_arrivals_ns"], r["delays_ns"],
               r["amplitudes"], r["phases_rad"], r["cluster_index"], r["ray_index"],
               direct=direct, seed=rec["seed"])


def write_scans(path, cirs: Iterable[Cir], cfg_hash: str) -> int:
    """Write a header line then one scan per line; returns the scan count."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json({"config_hash": cfg_hash, "schema": SCANS_SCHEMA}) + "\n")
        for cir in cirs:
            fh.write(canonical_json(cir_to_record(cir)) + "\n")
            n += 1
    return n


def iter_scans(path) -> Iterator[Cir]:
    """Read scans lazily; malformed content raises with the offending line number."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: corrupt JSON ({exc.msg})") from None
            if lineno == 1:
                schema = rec.get("schema") if isinstance(rec, dict) else None
                if schema != SCANS_SCHEMA:
                    raise SchemaError(f"{path}: unsupported scan schema {schema!r}, expected {SCANS_SCHEMA!r}")
                continue
            try:
                yield cir_from_record(rec)
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed scan record ({exc})") from None


def read_scans(path) -> list[Cir]:
    return list(iter_scans(path))


# -- CSV / JSON ----------------------------------------------------------------------

def write_csv(path, schema: str, cfg_hash: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema={schema}; config_hash={cfg_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path, schema: Optional[str] = None) -> tuple[dict, list[dict]]:
    """Return ``(meta, rows)`` where ``meta`` holds the comment-line fields."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise SchemaError(f"{path}: missing schema line")
        meta = dict(part.strip().split("=", 1) for part in first[1:].split(";"))
        if schema is not None and meta.get("schema") != schema:
            raise SchemaError(f"{path}: unsupported schema {meta.get('schema')!r}, expected {schema!r}")
        return meta, list(csv.DictReader(fh))


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def read_json(path, schema: Optional[str] = None) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {exc.lineno}: corrupt JSON ({exc.msg})") from None
    if schema is not None and doc.get("schema") != schema:
        raise SchemaError(f"{path}: unsupported schema {doc.get('schema')!r}, expected {schema!r}")
    return doc


def write_pdp_csv(path, pdp: Pdp, cfg_hash: str) -> None:
    write_csv(path, PDP_SCHEMA, cfg_hash, ("bin_ns", "power"),
              zip(map(float, pdp.delays_ns), map(float, pdp.bins)))


def json_safe(value):
    """Replace non-finite floats (not representable in strict JSON) by strings."""
    if isinstance(value, float) and not math.isfinite(value):
        return _fmt(value)
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
