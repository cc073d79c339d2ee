"""Multipath channel data model, min-max scaling, and the dataset file format.

A channel sample is a fixed set of 15 multipath components (MPCs), each a
(gain, phase, delay, AoA) quadruple, plus the Tx-Rx distance it was observed
at. The GAN consumes samples flattened MPC-major into 60 values scaled to
[0,1]; path gain is scaled in dB (20*log10) because linear magnitudes span
several orders and would collapse under a linear min-max map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MPC_COUNT = 15
MPC_FIELDS = 4                      # gain, phase, delay, aoa
VECTOR_WIDTH = MPC_COUNT * MPC_FIELDS
TWO_PI = 2.0 * math.pi

DATASET_HEADER = "#channelset v1"
SCALER_HEADER = "#scaler v1"

# scaling features, in flattened order; distance is the condition variable
FEATURES = ("gain_db", "phase", "delay", "aoa", "distance")


class FormatError(ValueError):
    """A dataset or scaler file does not conform to its format."""


class SampleError(ValueError):
    """A channel sample violates the data-model invariants."""


class ScalerError(ValueError):
    """Scaler is degenerate or applied outside its contract."""


@dataclass(frozen=True)
class Mpc:
    """One multipath component."""

    gain: float      # linear path-gain magnitude, > 0
    phase: float     # radians in [0, 2*pi)
    delay: float     # seconds, >= 0
    aoa: float       # azimuth angle of arrival, degrees in [-180, 180)

    def __post_init__(self):
        vals = (self.gain, self.phase, self.delay, self.aoa)
        if not all(math.isfinite(v) for v in vals):
            raise SampleError(f"non-finite MPC fields: {vals}")
        if self.gain <= 0:
            raise SampleError(f"path gain must be positive, got {self.gain}")
        if self.delay < 0:
            raise SampleError(f"delay must be non-negative, got {self.delay}")
        if not 0.0 <= self.phase < TWO_PI:
            raise SampleError(f"phase {self.phase} outside [0, 2pi)")
        if not -180.0 <= self.aoa < 180.0:
            raise SampleError(f"AoA {self.aoa} outside [-180, 180)")

    @property
    def gain_db(self) -> float:
        return 20.0 * math.log10(self.gain)

    @property
    def power(self) -> float:
        return self.gain * self.gain


@dataclass(frozen=True)
class ChannelSample:
    """A 15-MPC channel observation at a given link distance.

    MPCs are kept sorted by ascending delay. Ground-truth samples follow the
    LoS convention (earliest path at exactly zero degrees); samples coming
    back out of the generator satisfy it only approximately, so it is checked
    where the construction guarantees it (see synthetic.py) rather than here.
    """

    mpcs: tuple[Mpc, ...]
    distance: float

    def __post_init__(self):
        if len(self.mpcs) != MPC_COUNT:
            raise SampleError(f"expected {MPC_COUNT} MPCs, got {len(self.mpcs)}")
        if not (math.isfinite(self.distance) and self.distance > 0):
            raise SampleError(f"distance must be positive and finite, got {self.distance}")
        delays = [m.delay for m in self.mpcs]
        if any(b < a for a, b in zip(delays, delays[1:])):
            raise SampleError("MPCs must be sorted by ascending delay")

    def delays(self) -> np.ndarray:
        return np.array([m.delay for m in self.mpcs])

    def aoas(self) -> np.ndarray:
        return np.array([m.aoa for m in self.mpcs])

    def powers(self) -> np.ndarray:
        return np.array([m.power for m in self.mpcs])


@dataclass(frozen=True)
class Scaler:
    """Per-feature min-max bounds fit on the training split.

    ``bounds`` maps each name in FEATURES to (min, max). Gain bounds are in
    dB. Values outside the bounds clip to the [0,1] boundary on the forward
    map and to the bounds on the inverse map.
    """

    bounds: dict[str, tuple[float, float]]

    def __post_init__(self):
        missing = [f for f in FEATURES if f not in self.bounds]
        if missing:
            raise ScalerError(f"scaler missing features: {missing}")
        for name, (lo, hi) in self.bounds.items():
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ScalerError(f"non-finite bounds for {name}: ({lo}, {hi})")
            if hi <= lo:
                raise ScalerError(f"degenerate bounds for {name}: max {hi} <= min {lo}")

    def to01(self, feature: str, value: float) -> float:
        lo, hi = self.bounds[feature]
        return min(1.0, max(0.0, (value - lo) / (hi - lo)))

    def from01(self, feature: str, unit: float) -> float:
        lo, hi = self.bounds[feature]
        u = min(1.0, max(0.0, unit))
        return lo + u * (hi - lo)


def fit_scaler(samples: list[ChannelSample]) -> Scaler:
    """Min-max bounds over every MPC of every sample (gain taken in dB)."""
    if not samples:
        raise ScalerError("cannot fit a scaler on an empty split")
    cols = {name: [] for name in FEATURES}
    for s in samples:
        cols["distance"].append(s.distance)
        for m in s.mpcs:
            cols["gain_db"].append(m.gain_db)
            cols["phase"].append(m.phase)
            cols["delay"].append(m.delay)
            cols["aoa"].append(m.aoa)
    bounds = {name: (float(min(vals)), float(max(vals))) for name, vals in cols.items()}
    return Scaler(bounds)


def normalize(sample: ChannelSample, scaler: Scaler) -> tuple[np.ndarray, float]:
    """Flatten to the 60-vector in [0,1] plus the normalized distance condition.

    Layout is MPC-major: [gain_1, phase_1, delay_1, aoa_1, gain_2, ...].
    """
    vec = np.empty(VECTOR_WIDTH)
    for i, m in enumerate(sample.mpcs):
        base = i * MPC_FIELDS
        vec[base + 0] = scaler.to01("gain_db", m.gain_db)
        vec[base + 1] = scaler.to01("phase", m.phase)
        vec[base + 2] = scaler.to01("delay", m.delay)
        vec[base + 3] = scaler.to01("aoa", m.aoa)
    return vec, scaler.to01("distance", sample.distance)


def denormalize(vec: np.ndarray, condition: float, scaler: Scaler) -> ChannelSample:
    """Inverse of :func:`normalize`; re-sorts MPCs by delay.

    Entries are clamped to [0,1] first, so any real-valued generator output
    maps to a valid sample.
    """
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (VECTOR_WIDTH,):
        raise SampleError(f"expected a {VECTOR_WIDTH}-vector, got shape {vec.shape}")
    mpcs = []
    for i in range(MPC_COUNT):
        base = i * MPC_FIELDS
        gain_db = scaler.from01("gain_db", float(vec[base + 0]))
        phase = scaler.from01("phase", float(vec[base + 1]))
        delay = scaler.from01("delay", float(vec[base + 2]))
        aoa = scaler.from01("aoa", float(vec[base + 3]))
        mpcs.append(Mpc(gain=10.0 ** (gain_db / 20.0), phase=phase, delay=delay, aoa=aoa))
    mpcs.sort(key=lambda m: m.delay)
    return ChannelSample(mpcs=tuple(mpcs), distance=scaler.from01("distance", condition))


# file formats --------------------------------------------------------------


def _format_mpc(m: Mpc) -> str:
    return f"{m.gain!r},{m.phase!r},{m.delay!r},{m.aoa!r}"


def serialize_dataset(samples: list[ChannelSample]) -> str:
    """Line-oriented text: header, then one `distance;mpc;...;mpc` per sample.

    Floats use repr (shortest round-trip), so parse(serialize(x)) == x.
    """
    lines = [DATASET_HEADER]
    for s in samples:
        lines.append(f"{s.distance!r};" + ";".join(_format_mpc(m) for m in s.mpcs))
    return "\n".join(lines) + "\n"


def parse_dataset(text: str) -> list[ChannelSample]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != DATASET_HEADER:
        raise FormatError(f"missing dataset header {DATASET_HEADER!r}")
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(";")
        if len(parts) != 1 + MPC_COUNT:
            raise FormatError(
                f"line {lineno}: expected distance plus {MPC_COUNT} MPC groups, got {len(parts) - 1}"
            )
        try:
            distance = float(parts[0])
            mpcs = []
            for group in parts[1:]:
                fields = group.split(",")
                if len(fields) != MPC_FIELDS:
                    raise FormatError(f"line {lineno}: MPC group needs {MPC_FIELDS} fields")
                g, p, d, a = (float(f) for f in fields)
                mpcs.append(Mpc(gain=g, phase=p, delay=d, aoa=a))
            samples.append(ChannelSample(mpcs=tuple(mpcs), distance=distance))
        except FormatError:
            raise
        except (ValueError, SampleError) as err:
            raise FormatError(f"line {lineno}: {err}") from err
    return samples


def write_dataset(path, samples: list[ChannelSample]) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_dataset(samples))


def read_dataset(path) -> list[ChannelSample]:
    with open(path) as fh:
        return parse_dataset(fh.read())


def serialize_scaler(scaler: Scaler) -> str:
    lines = [SCALER_HEADER]
    for name in FEATURES:
        lo, hi = scaler.bounds[name]
        lines.append(f"{name}.min = {lo!r}")
        lines.append(f"{name}.max = {hi!r}")
    return "\n".join(lines) + "\n"


def parse_scaler(text: str) -> Scaler:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SCALER_HEADER:
        raise FormatError(f"missing scaler header {SCALER_HEADER!r}")
    values: dict[str, float] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        try:
            values[key.strip()] = float(raw)
        except ValueError as err:
            raise FormatError(f"line {lineno}: {err}") from err
    bounds = {}
    for name in FEATURES:
        try:
            bounds[name] = (values[f"{name}.min"], values[f"{name}.max"])
        except KeyError as err:
            raise FormatError(f"scaler file missing entry for {name}") from err
    return Scaler(bounds)


def write_scaler(path, scaler: Scaler) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_scaler(scaler))


def read_scaler(path) -> Scaler:
    with open(path) as fh:
        return parse_scaler(fh.read())


def normalize_batch(samples: list[ChannelSample], scaler: Scaler) -> tuple[np.ndarray, np.ndarray]:
    """Stack normalized samples: (N, 60) vectors and (N, 1) conditions."""
    vecs = np.empty((len(samples), VECTOR_WIDTH))
    conds = np.empty((len(samples), 1))
    for i, s in enumerate(samples):
        vecs[i], conds[i, 0] = normalize(s, scaler)
    return vecs, conds
