"""Scenario descriptors and the measured per-scenario parameter tables.

Every number in the builtin tables is a measured value for one radio
position / rain combination at the Wall of Wind facility.  Cells that were
not measured (WDR noise without rain, direct-path statistics behind the
obstacle) are stored as ``None`` and never zero-filled.
"""
from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass
from typing import Optional

PARAMS_SCHEMA = "wow-uwb-params/1"

HURRICANE_WINDS_MPH = (90.0, 100.0, 110.0, 120.0, 130.0, 140.0)
REFERENCE_WIND_MPH = 1.86
LINK_DISTANCE_M = 12.0
RAIN_INTENSITY_MMH = 223.5

# Scan grid: 100 ns captures sampled every 61 ps.
SCAN_DURATION_NS = 100.0
BIN_WIDTH_PS = 61
BIN_WIDTH_NS = BIN_WIDTH_PS / 1000.0
N_BINS = int(math.floor(SCAN_DURATION_NS / BIN_WIDTH_NS))  # 1639


def db_to_power(db):
    return 10.0 ** (db / 10.0)


def power_to_db(power):
    return 10.0 * math.log10(power)


def amplitude_sigma_ln(sigma_db):
    """Natural-log std of an amplitude whose spread is given in dB."""
    return sigma_db * math.log(10.0) / 20.0


def power_sigma_ln(sigma_db):
    """Natural-log std of a power whose spread is given in dB."""
    return sigma_db * math.log(10.0) / 10.0


class Position(str, enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"


class Rain(str, enum.Enum):
    S1_NoRain = "S1"
    S2_Rain = "S2"


class PathKind(str, enum.Enum):
    LOS = "LOS"
    NLOS = "NLOS"


@dataclass(frozen=True)
class Scenario:
    """Radio position, rain state and wind velocity of one measurement run.

    ``wind_mph`` is one of the six hurricane steps (90..140 mph) or the
    1.86 mph ambient reference used as the attenuation baseline.
    """

    position: Position
    rain: Rain
    wind_mph: float = HURRICANE_WINDS_MPH[0]

    def __post_init__(self):
        object.__setattr__(self, "position", Position(self.position))
        object.__setattr__(self, "rain", Rain(self.rain))
        wind = float(self.wind_mph)
        if wind != REFERENCE_WIND_MPH and wind not in HURRICANE_WINDS_MPH:
            raise ValueError(
                f"wind_mph must be {REFERENCE_WIND_MPH} (reference) or one of "
                f"{HURRICANE_WINDS_MPH}, got {self.wind_mph}"
            )
        object.__setattr__(self, "wind_mph", wind)

    @property
    def path_kind(self) -> PathKind:
        return PathKind.NLOS if self.position is Position.P3 else PathKind.LOS

    @property
    def distance_m(self) -> float:
        return LINK_DISTANCE_M

    @property
    def rain_intensity_mmh(self) -> float:
        return RAIN_INTENSITY_MMH if self.rain is Rain.S2_Rain else 0.0

    @property
    def is_reference(self) -> bool:
        return self.wind_mph == REFERENCE_WIND_MPH

    @property
    def key(self) -> tuple[Position, Rain]:
        return (self.position, self.rain)

    @property
    def label(self) -> str:
        return f"{self.position.value},{self.rain.value}"

    def with_wind(self, wind_mph) -> "Scenario":
        return dataclasses.replace(self, wind_mph=wind_mph)

    @classmethod
    def reference(cls, position, rain=Rain.S1_NoRain) -> "Scenario":
        return cls(position, rain, REFERENCE_WIND_MPH)

    @classmethod
    def parse(cls, text: str, wind_mph=HURRICANE_WINDS_MPH[0]) -> "Scenario":
        """Parse labels such as ``"P1,S2"``, ``"P1S2"`` or ``"p3-s1"``."""
        cleaned = text.strip().upper().replace("-", ",").replace(" ", "")
        if "," not in cleaned and len(cleaned) == 4:
            cleaned = cleaned[:2] + "," + cleaned[2:]
        parts = cleaned.split(",")
        if len(parts) != 2:
            raise ValueError(f"cannot parse scenario {text!r}; expected e.g. 'P1,S1'")
        try:
            return cls(Position(parts[0]), Rain(parts[1]), wind_mph)
        except ValueError:
            raise ValueError(f"unknown scenario {text!r}; positions P1-P3, rain S1/S2") from None

    def to_dict(self) -> dict:
        return {
            "position": self.position.value,
            "rain": self.rain.value,
            "wind_mph": self.wind_mph,
            "path_kind": self.path_kind.value,
            "distance_m": self.distance_m,
            "rain_intensity_mmh": self.rain_intensity_mmh,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(Position(d["position"]), Rain(d["rain"]), d["wind_mph"])


@dataclass(frozen=True)
class MultipathParams:
    """One column of the channel-model table.

    Rates are in 1/ns, decay constants and arrival spreads in ns, every
    ``*_db`` spread in dB.  ``None`` marks a cell the table leaves blank.
    """

    n_bar: float
    gamma_rate: float
    zeta_rate: float
    lambda_cap: float
    lambda_ray: float
    sigma_a_db: float
    sigma_nbar: float
    sigma_c_ns: float
    sigma_m_ns: float
    sigma_p_db: float
    sigma_mp_db: float
    sigma_r_db: Optional[float]
    sigma_a0_db: float
    sigma_df_db: float
    mu_df_db: float
    sigma_dr_db: Optional[float]
    mu_dr_db: Optional[float]
    sigma_k_db: Optional[float]
    mu_k_db: Optional[float]

    @property
    def has_direct_component(self) -> bool:
        return self.mu_dr_db is not None and self.sigma_dr_db is not None


@dataclass(frozen=True)
class LargeScaleParams:
    alpha: float
    a_w0_db: float
    sigma_a_db: float

    def mean_attenuation_db(self, wind_mph):
        return self.a_w0_db + self.alpha * wind_mph


@dataclass(frozen=True)
class SmallScaleParams:
    # Table values are kept verbatim; several are negative dB numbers.
    mu_mf_db: float
    sigma_mf_db: float
    mu_sc_db: float
    sigma_sc_db: float


@dataclass(frozen=True)
class ScenarioParams:
    multipath: MultipathParams
    large_scale: LargeScaleParams
    small_scale: SmallScaleParams


@dataclass(frozen=True)
class HurricaneScaling:
    """Constants inflating base-case arrival times and cluster counts.

    The base case defaults anchor on the least-perturbed measured column
    (P1, no rain); none of these constants has a published value.
    """

    c_c: float = 0.2
    c_m: float = 0.1
    gamma_bar_b_ns: float = 1.0 / 0.11
    tau_bar_b_ns: float = 1.0 / 16.32
    n_bar_b: float = 5.2
    c_j: float = 1.0
    c_p: float = 1.0
    c_r: float = 1.0

    def problems(self) -> list[str]:
        out = []
        for name in ("c_c", "c_m"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                out.append(f"{name} must lie in [0, 1)")
        # Equal constants are only meaningful for the unperturbed base case.
        if self.c_m >= self.c_c and not (self.c_m == 0.0 and self.c_c == 0.0):
            out.append("c_c must exceed c_m")
        if self.c_p <= 0:
            out.append("c_p > 0")
        if self.c_r <= 0:
            out.append("c_r > 0")
        if self.c_j < 0:
            out.append("c_j >= 0")
        if self.gamma_bar_b_ns <= 0 or self.tau_bar_b_ns <= 0:
            out.append("base-case mean arrival times must be positive")
        if self.n_bar_b < 1:
            out.append("n_bar_b >= 1")
        return out

    @property
    def n_bar(self) -> float:
        return (1.0 + self.c_j * self.c_p / self.c_r) * self.n_bar_b


@dataclass(frozen=True)
class DiffusePowerModel:
    """Diffuse (scattered) power as a function of rain, pressure and wind."""

    a_b: float = 1.0
    c_r0: float = 0.0
    c_p0: float = 0.0
    c_w0: float = 0.0
    sigma_a0_db: float = 0.0

    def __post_init__(self):
        if min(self.c_r0, self.c_p0, self.c_w0) < 0:
            raise ValueError("diffuse-power constants must be nonnegative")
        if self.a_b <= 0:
            raise ValueError("a_b must be positive")

    def mean_power(self, b_r0, b_p0, v_w0):
        """Noise-free diffuse power for one design row."""
        if b_r0 not in (0, 1) or b_p0 not in (0, 1):
            raise ValueError("b_r0 and b_p0 are binary indicators")
        return self.a_b * (1.0 + self.c_r0 * b_r0 + self.c_p0 * b_p0 + self.c_w0 * v_w0)


# Columns in table order: P1S1, P1S2, P2S1, P2S2, P3S1, P3S2.
_KEYS = [(p, r) for p in Position for r in Rain]

_LARGE_SCALE = {
    "alpha": [0.182, 0.122, 0.15, 0.06, -0.01, -0.005],
    "a_w0_db": [-11.7, -1.9, -5.5, 9.73, 23.0, 25.0],
    "sigma_a_db": [12.39, 10.09, 13.0, 11.53, 18.32, 16.75],
}

_SMALL_SCALE = {
    "mu_mf_db": [-2.69, -2.96, -2.47, -3.25, -2.55, -2.92],
    "sigma_mf_db": [-25.2, -25.7, -27.2, -31.5, -20.5, -19.9],
    "mu_sc_db": [0.92, 2.28, 1.29, -3.07, -9.21, -10.6],
    "sigma_sc_db": [1.21, 6.26, -1.75, -3.85, -16.5, -27.0],
}

_MULTIPATH = {
    "n_bar": [5.2, 4.0, 3.33, 3.1, 1.67, 1.67],
    "gamma_rate": [0.11, 0.06, 0.043, 0.027, 0.017, 0.017],
    "zeta_rate": [16.32, 12.6, 9.32, 5.61, 2.33, 0.3],
    "lambda_cap": [2.3, 2.45, 2.38, 2.47, 1.72, 1.86],
    "lambda_ray": [0.8, 0.91, 0.82, 0.85, 0.54, 0.61],
    "sigma_a_db": [23.14, 21.22, 21.56, 18.51, 15.12, 13.2],
    "sigma_nbar": [1.59, 0.98, 0.836, 0.837, 0.53, 0.516],
    "sigma_c_ns": [16.4, 34.5, 43.93, 49.47, 51.63, 52.14],
    "sigma_m_ns": [0.287, 0.268, 0.277, 0.265, 0.28, 0.253],
    "sigma_p_db": [21.3, 20.1, 20.03, 19.72, 17.41, 14.1],
    "sigma_mp_db": [55.14, 38.44, 33.22, 26.77, 20.17, 15.22],
    "sigma_r_db": [None, 5.77, None, 6.39, None, 7.31],
    "sigma_a0_db": [28.97, 10.45, 8.44, 0.219, 6.46, 0.959],
    "sigma_df_db": [18.83, 17.79, 17.6, 15.3, 12.78, 11.45],
    "mu_df_db": [16.19, 15.17, 15.28, 13.54, 11.78, 10.9],
    "sigma_dr_db": [11.53, 10.97, 10.64, 9.6, None, None],
    "mu_dr_db": [33.3, 31.0, 30.7, 27.86, None, None],
    "sigma_k_db": [14.64, 14.5, 11.2, 6.44, None, None],
    "mu_k_db": [17.69, 14.43, 16.0, 13.79, None, None],
}


def _column(table, idx):
    return {name: values[idx] for name, values in table.items()}


def builtin_tables() -> dict[tuple[Position, Rain], ScenarioParams]:
    """Return the six measured parameter columns keyed by (position, rain)."""
    out = {}
    for idx, key in enumerate(_KEYS):
        out[key] = ScenarioParams(
            multipath=MultipathParams(**_column(_MULTIPATH, idx)),
            large_scale=LargeScaleParams(**_column(_LARGE_SCALE, idx)),
            small_scale=SmallScaleParams(**_column(_SMALL_SCALE, idx)),
        )
    return out


def default_hurricane_scaling() -> HurricaneScaling:
    return HurricaneScaling()


_SPREAD_FIELDS = (
    "sigma_a_db", "sigma_nbar", "sigma_c_ns", "sigma_m_ns", "sigma_p_db",
    "sigma_mp_db", "sigma_r_db", "sigma_a0_db", "sigma_df_db", "sigma_dr_db",
    "sigma_k_db",
)


def validate(params: MultipathParams) -> list[str]:
    """List every violated invariant of a multipath parameter set.

    An empty list means the set is usable by the generator.
    """
    report = []
    for name in ("gamma_rate", "zeta_rate", "lambda_cap", "lambda_ray"):
        value = getattr(params, name)
        if not (value > 0 and math.isfinite(value)):
            report.append(f"{name} > 0")
    if not params.lambda_cap > params.lambda_ray:
        report.append("lambda_cap > lambda_ray")
    if not params.n_bar >= 1:
        report.append("n_bar >= 1")
    for name in _SPREAD_FIELDS:
        value = getattr(params, name)
        if value is not None and not value >= 0:
            report.append(f"{name} >= 0")
    direct = (params.mu_dr_db, params.sigma_dr_db)
    if (direct[0] is None) != (direct[1] is None):
        report.append("mu_dr_db and sigma_dr_db must be both present or both absent")
    return report


# -- serialization ----------------------------------------------------------

def params_to_dict(tables: dict[tuple[Position, Rain], ScenarioParams]) -> dict:
    scenarios = []
    for (pos, rain), sp in sorted(tables.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        scenarios.append({
            "position": pos.value,
            "rain": rain.value,
            "multipath": dataclasses.asdict(sp.multipath),
            "large_scale": dataclasses.asdict(sp.large_scale),
            "small_scale": dataclasses.asdict(sp.small_scale),
        })
    return {"schema": PARAMS_SCHEMA, "scenarios": scenarios}


def params_from_dict(doc: dict) -> dict[tuple[Position, Rain], ScenarioParams]:
    schema = doc.get("schema")
    if schema != PARAMS_SCHEMA:
        raise ValueError(f"unsupported parameter schema {schema!r}, expected {PARAMS_SCHEMA!r}")
    out = {}
    for entry in doc["scenarios"]:
        key = (Position(entry["position"]), Rain(entry["rain"]))
        out[key] = ScenarioParams(
            multipath=MultipathParams(**entry["multipath"]),
            large_scale=LargeScaleParams(**entry["large_scale"]),
            small_scale=SmallScaleParams(**entry["small_scale"]),
        )
    return out


def dump_params(tables, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(params_to_dict(tables), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path) -> dict[tuple[Position, Rain], ScenarioParams]:
    with open(path, encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))
