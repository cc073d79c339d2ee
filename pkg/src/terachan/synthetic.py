"""Synthetic ground-truth channel generator.

Stands in for a measurement-driven ray generator so that the whole pipeline
has a reproducible reference distribution. The model is a single-cluster
exponential-decay GSCM: a free-space LoS path at zero azimuth plus 14 NLoS
paths whose excess delays are exponential, whose gains decay exponentially in
excess delay with lognormal shadowing, and whose arrival angles follow a
wrapped Laplacian around the LoS direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import MPC_COUNT, ChannelSample, Mpc, Scaler, fit_scaler
from .rng import stream

SPEED_OF_LIGHT = 299792458.0
SHADOW_SIGMA_DB = 3.0
NLOS_COUNT = MPC_COUNT - 1
TRAIN_FRACTION = 0.8

# stream ids under the master seed
_STREAM_DISTANCE = 0
_STREAM_SPLIT = 1
_STREAM_SAMPLE = 2


class GeneratorConfigError(ValueError):
    pass


class DistanceError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic channel distribution.

    ``delay_decay`` is both the mean NLoS excess delay and the gain e-folding
    constant; ``angle_scale`` is the Laplacian scale of NLoS arrival angles in
    degrees. The distance range is an artifact choice (indoor desk scale).
    """

    sample_count: int = 2000
    distance_range: tuple[float, float] = (1.0, 30.0)
    carrier_frequency: float = 3.0e11
    delay_decay: float = 20e-9
    angle_scale: float = 35.0
    seed: int = 1

    def __post_init__(self):
        d_min, d_max = self.distance_range
        if not (d_min > 0 and d_max > d_min):
            raise GeneratorConfigError(f"bad distance range ({d_min}, {d_max})")
        if self.carrier_frequency <= 0 or self.delay_decay <= 0 or self.angle_scale <= 0:
            raise GeneratorConfigError("carrier frequency, delay decay and angle scale must be positive")
        if self.sample_count < 10:
            raise GeneratorConfigError(
                f"sample_count {self.sample_count} too small for an 80/20 split"
            )


@dataclass
class Dataset:
    """Train/test split plus the scaler fit on the training split only."""

    train: list[ChannelSample]
    test: list[ChannelSample]
    scaler: Scaler
    config: GeneratorConfig | None = field(default=None, repr=False)

    @property
    def all_samples(self) -> list[ChannelSample]:
        return self.train + self.test


def los_gain(distance: float, carrier_frequency: float) -> float:
    """Free-space amplitude gain lambda/(4*pi*d)."""
    wavelength = SPEED_OF_LIGHT / carrier_frequency
    return wavelength / (4.0 * np.pi * distance)


def wrap_angle(a: float) -> float:
    """Wrap degrees into [-180, 180)."""
    return float((a + 180.0) % 360.0 - 180.0)


def generate_sample(distance: float, rng: np.random.Generator,
                    config: GeneratorConfig) -> ChannelSample:
    """Draw one channel sample at the given link distance."""
    d_min, d_max = config.distance_range
    if not d_min <= distance <= d_max:
        raise DistanceError(f"distance {distance} outside configured range [{d_min}, {d_max}]")

    g_los = los_gain(distance, config.carrier_frequency)
    los_delay = distance / SPEED_OF_LIGHT
    los_phase = rng.uniform(0.0, 2.0 * np.pi)

    excess = rng.exponential(config.delay_decay, size=NLOS_COUNT)
    shadow_db = rng.normal(0.0, SHADOW_SIGMA_DB, size=NLOS_COUNT)
    angles = rng.laplace(0.0, config.angle_scale, size=NLOS_COUNT)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=NLOS_COUNT)

    order = np.argsort(excess, kind="stable")
    mpcs = [Mpc(gain=g_los, phase=float(los_phase), delay=los_delay, aoa=0.0)]
    for idx in order:
        gain = g_los * np.exp(-excess[idx] / config.delay_decay) * 10.0 ** (shadow_db[idx] / 20.0)
        mpcs.append(
            Mpc(
                gain=float(gain),
                phase=float(phases[idx]),
                delay=float(los_delay + excess[idx]),
                aoa=wrap_angle(float(angles[idx])),
            )
        )
    return ChannelSample(mpcs=tuple(mpcs), distance=float(distance))


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Per-sample stream so generation is order-independent."""
    return stream(seed, _STREAM_SAMPLE, index)


def generate_dataset(config: GeneratorConfig) -> Dataset:
    """Seeded dataset with an 80/20 shuffled split and train-fit scaler."""
    n = config.sample_count
    d_min, d_max = config.distance_range
    distances = stream(config.seed, _STREAM_DISTANCE).uniform(d_min, d_max, size=n)
    samples = [
        generate_sample(float(distances[i]), sample_rng(config.seed, i), config)
        for i in range(n)
    ]
    perm = stream(config.seed, _STREAM_SPLIT).permutation(n)
    n_train = int(n * TRAIN_FRACTION)
    train = [samples[i] for i in perm[:n_train]]
    test = [samples[i] for i in perm[n_train:]]
    return Dataset(train=train, test=test, scaler=fit_scaler(train), config=config)
