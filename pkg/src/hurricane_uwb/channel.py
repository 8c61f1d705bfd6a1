"""Channel data containers: taps, impulse responses, PDPs and waveforms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .params import BIN_WIDTH_NS, BIN_WIDTH_PS, N_BINS, SCAN_DURATION_NS, Scenario

TWO_PI = 2.0 * math.pi


def delay_to_bin(delay_ns):
    """Nearest grid bin for a delay, clipped to the last bin of the scan."""
    idx = np.rint(np.asarray(delay_ns, dtype=float) / BIN_WIDTH_NS).astype(np.int64)
    return np.minimum(idx, N_BINS - 1)


def bin_delays_ns():
    return np.arange(N_BINS) * BIN_WIDTH_NS


@dataclass(frozen=True)
class Tap:
    """One multipath component.

    ``ray_index`` is 1-based inside its cluster; 0 marks the direct (LOS)
    component, which is kept apart from the scattered rays.
    """

    delay_ns: float
    amplitude: float
    phase_rad: float
    cluster_index: int
    ray_index: int


class Cir:
    """Sparse clustered impulse response of one 100 ns scan.

    Scattered rays are held as flat arrays sorted by delay; cluster ``i``
    starts at ``cluster_arrivals_ns[i - 1]`` and its first ray sits exactly
    on that arrival.  The optional ``direct`` tap is the dominant LOS
    component.
    """

    scan_duration_ns = SCAN_DURATION_NS
    bin_width_ps = BIN_WIDTH_PS

    def __init__(self, scenario: Scenario, cluster_arrivals_ns, delays_ns, amplitudes,
                 phases_rad, cluster_index, ray_index, direct: Optional[Tap] = None,
                 seed: int = 0):
        self.scenario = scenario
        self.cluster_arrivals_ns = np.asarray(cluster_arrivals_ns, dtype=float)
        self.delays_ns = np.asarray(delays_ns, dtype=float)
        self.amplitudes = np.asarray(amplitudes, dtype=float)
        self.phases_rad = np.asarray(phases_rad, dtype=float)
        self.cluster_index = np.asarray(cluster_index, dtype=np.int64)
        self.ray_index = np.asarray(ray_index, dtype=np.int64)
        self.direct = direct
        self.seed = int(seed)
        for arr in (self.cluster_arrivals_ns, self.delays_ns, self.amplitudes,
                    self.phases_rad, self.cluster_index, self.ray_index):
            arr.setflags(write=False)

    @classmethod
    def from_taps(cls, scenario, taps, seed=0) -> "Cir":
        """Build a CIR from a tap list; cluster arrivals are the first-ray delays."""
        direct = None
        rays = []
        for t in taps:
            if t.ray_index == 0:
                direct = t
            else:
                rays.append(t)
        rays.sort(key=lambda t: (t.delay_ns, t.cluster_index, t.ray_index))
        arrivals = {}
        for t in rays:
            if t.ray_index == 1:
                arrivals[t.cluster_index] = t.delay_ns
        return cls(
            scenario,
            [arrivals[k] for k in sorted(arrivals)],
            [t.delay_ns for t in rays],
            [t.amplitude for t in rays],
            [t.phase_rad for t in rays],
            [t.cluster_index for t in rays],
            [t.ray_index for t in rays],
            direct=direct,
            seed=seed,
        )

    @property
    def n_clusters(self) -> int:
        return int(self.cluster_arrivals_ns.size)

    @property
    def n_taps(self) -> int:
        return int(self.delays_ns.size) + (self.direct is not None)

    @property
    def direct_power(self) -> float:
        return 0.0 if self.direct is None else self.direct.amplitude ** 2

    def diffuse_energy(self) -> float:
        return float(np.sum(self.amplitudes ** 2))

    def total_energy(self) -> float:
        return self.diffuse_energy() + self.direct_power

    def without_direct(self) -> "Cir":
        """The same scan with the direct tap removed."""
        return Cir(self.scenario, self.cluster_arrivals_ns, self.delays_ns, self.amplitudes,
                   self.phases_rad, self.cluster_index, self.ray_index, direct=None, seed=self.seed)

    def all_delays(self) -> np.ndarray:
        if self.direct is None:
            return self.delays_ns
        return np.concatenate(([self.direct.delay_ns], self.delays_ns))

    def all_amplitudes(self) -> np.ndarray:
        if self.direct is None:
            return self.amplitudes
        return np.concatenate(([self.direct.amplitude], self.amplitudes))

    def all_phases(self) -> np.ndarray:
        if self.direct is None:
            return self.phases_rad
        return np.concatenate(([self.direct.phase_rad], self.phases_rad))

    @property
    def taps(self) -> list[Tap]:
        out = [] if self.direct is None else [self.direct]
        for d, a, p, c, r in zip(self.delays_ns, self.amplitudes, self.phases_rad,
                                 self.cluster_index, self.ray_index):
            out.append(Tap(float(d), float(a), float(p), int(c), int(r)))
        return out

    @property
    def clusters(self) -> list[tuple[float, list[Tap]]]:
        taps = [t for t in self.taps if t.ray_index > 0]
        return [
            (float(g), [t for t in taps if t.cluster_index == i + 1])
            for i, g in enumerate(self.cluster_arrivals_ns)
        ]

    def cluster_slices(self) -> list[slice]:
        """Slices into the flat ray arrays, one per cluster."""
        edges = np.searchsorted(self.cluster_index, np.arange(1, self.n_clusters + 2))
        return [slice(int(edges[i]), int(edges[i + 1])) for i in range(self.n_clusters)]

    def problems(self) -> list[str]:
        """Structural invariant violations (empty when the CIR is well formed)."""
        out = []
        g = self.cluster_arrivals_ns
        if g.size < 1:
            out.append("at least one cluster")
        if np.any(np.diff(g) <= 0):
            out.append("cluster arrivals strictly increasing")
        if self.delays_ns.size and (self.delays_ns.min() < 0 or self.delays_ns.max() >= SCAN_DURATION_NS):
            out.append("delays inside [0, scan duration)")
        if np.any(self.amplitudes <= 0):
            out.append("amplitudes positive")
        if np.any((self.phases_rad < 0) | (self.phases_rad >= TWO_PI)):
            out.append("phases in [0, 2pi)")
        for i, sl in enumerate(self.cluster_slices()):
            d = self.delays_ns[sl]
            if d.size == 0 or d[0] != g[i] or self.ray_index[sl][0] != 1:
                out.append(f"cluster {i + 1} first ray on its arrival")
            if np.any(np.diff(d) <= 0):
                out.append(f"cluster {i + 1} ray delays strictly increasing")
        return out

    def __eq__(self, other):
        if not isinstance(other, Cir):
            return NotImplemented
        return (
            self.scenario == other.scenario
            and self.seed == other.seed
            and self.direct == other.direct
            and all(np.array_equal(getattr(self, n), getattr(other, n)) for n in (
                "cluster_arrivals_ns", "delays_ns", "amplitudes", "phases_rad",
                "cluster_index", "ray_index"))
        )

    __hash__ = None

    def __repr__(self):
        return (f"Cir({self.scenario.label}@{self.scenario.wind_mph}mph, "
                f"clusters={self.n_clusters}, taps={self.n_taps}, seed={self.seed})")


@dataclass(frozen=True, eq=False)
class Pdp:
    """Power-delay profile on the 61 ps scan grid (linear power units)."""

    bins: np.ndarray
    scenario: Optional[Scenario] = None
    bin_width_ps: int = BIN_WIDTH_PS

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=float)
        if bins.ndim != 1:
            raise ValueError("PDP bins must be one-dimensional")
        if np.any(bins < 0) or not np.all(np.isfinite(bins)):
            raise ValueError("PDP bins must be finite and nonnegative")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)

    @property
    def total_energy(self) -> float:
        return float(np.sum(self.bins))

    @property
    def delays_ns(self) -> np.ndarray:
        return np.arange(self.bins.size) * (self.bin_width_ps / 1000.0)


@dataclass(frozen=True, eq=False)
class ScanWaveform:
    samples: np.ndarray
    scenario: Optional[Scenario] = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.shape != (N_BINS,):
            raise ValueError(f"scan waveform must have {N_BINS} samples, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("scan waveform must be finite")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True, eq=False)
class PulseTemplate:
    """Received pulse shape; ``anchor`` is the sample aligned with a tap delay."""

    samples: np.ndarray
    anchor: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float).ravel()
        if samples.size == 0 or samples.size > N_BINS:
            raise ValueError(f"template length must be in 1..{N_BINS}")
        if not 0 <= self.anchor < samples.size:
            raise ValueError("template anchor outside the template")
        object.__setattr__(self, "samples", samples)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.samples)

    @classmethod
    def impulse(cls) -> "PulseTemplate":
        return cls(np.array([1.0]), 0)

    @classmethod
    def default(cls, n_samples=16, center_ghz=4.2) -> "PulseTemplate":
        """Raised-cosine windowed sinusoid spanning ~1 ns, unit peak."""
        t = (np.arange(n_samples) - (n_samples - 1) / 2.0) * BIN_WIDTH_NS
        support = n_samples * BIN_WIDTH_NS
        window = 0.5 * (1.0 + np.cos(2.0 * np.pi * t / support))
        pulse = window * np.cos(2.0 * np.pi * center_ghz * t)
        pulse /= np.max(np.abs(pulse))
        return cls(pulse, int(np.argmax(np.abs(pulse))))

    @classmethod
    def from_file(cls, path) -> "PulseTemplate":
        """Load a template from a text file: one sample per line.

        A leading ``# anchor=<k>`` line sets the alignment sample; otherwise
        the absolute peak is used.
        """
        anchor = None
        values = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "anchor=" in line:
                        anchor = int(line.split("anchor=")[1].split()[0])
                    continue
                values.append(float(line.split(",")[-1]))
        samples = np.array(values)
        if anchor is None:
            anchor = int(np.argmax(np.abs(samples))) if samples.size else 0
        return cls(samples, anchor)
