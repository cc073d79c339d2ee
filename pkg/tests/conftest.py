"""Shared oracles: finite differences and small channel-sample factories."""

from __future__ import annotations

import numpy as np
import pytest

from terachan.autodiff import Graph, Tensor
from terachan.channel import MPC_COUNT, ChannelSample, Mpc


def finite_difference(value_fn, arr: np.ndarray, index: int, step: float = 1e-4) -> float:
    """Central difference of a scalar-valued function in one coordinate.

    ``value_fn()`` re-evaluates the target from current array contents; the
    array is perturbed in place and restored.
    """
    flat = arr.reshape(-1)
    orig = flat[index]
    flat[index] = orig + step
    up = value_fn()
    flat[index] = orig - step
    down = value_fn()
    flat[index] = orig
    return (up - down) / (2.0 * step)


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(build, leaves: list[Tensor], step: float = 1e-4,
                    rtol: float = 1e-3, max_coords: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Compare reverse-mode gradients of ``build()`` against central differences.

    ``build`` constructs a scalar Tensor from the given leaf tensors; it is
    re-run eagerly (no graph) for the difference quotients. Returns the worst
    relative error seen. Checks every coordinate unless ``max_coords`` caps it.
    """
    graph = Graph()
    with graph:
        out = build()
    if out.node is not None:
        graph = out.node.graph  # build() may have recorded on its own graph
    for t in leaves:
        t.grad = None
    graph.backward(out)

    def value():
        return build().item()

    worst = 0.0
    for t in leaves:
        size = t.data.size
        if max_coords is not None and size > max_coords:
            assert rng is not None
            coords = rng.choice(size, size=max_coords, replace=False)
        else:
            coords = range(size)
        grad = np.zeros(size) if t.grad is None else t.grad.reshape(-1)
        for idx in coords:
            fd = finite_difference(value, t.data, int(idx), step)
            err = relative_error(fd, float(grad[idx]))
            assert err <= rtol, (
                f"gradient mismatch at coord {idx} of shape {t.shape}: "
                f"fd={fd:.8e} analytic={grad[idx]:.8e} rel={err:.2e}"
            )
            worst = max(worst, err)
    return worst


def make_sample(rng: np.random.Generator, distance: float | None = None) -> ChannelSample:
    """Random valid 15-MPC sample; delays sorted, LoS-style first path."""
    if distance is None:
        distance = float(rng.uniform(1.0, 30.0))
    base_delay = distance / 299792458.0
    excess = np.sort(rng.uniform(0.0, 150e-9, size=MPC_COUNT - 1))
    mpcs = [Mpc(gain=float(rng.uniform(1e-7, 1e-4)), phase=float(rng.uniform(0, 2 * np.pi)),
                delay=base_delay, aoa=0.0)]
    for e in excess:
        mpcs.append(
            Mpc(
                gain=float(rng.uniform(1e-9, 1e-4)),
                phase=float(rng.uniform(0, 2 * np.pi)),
                delay=float(base_delay + e),
                aoa=float(rng.uniform(-180.0, 180.0)),
            )
        )
    return ChannelSample(mpcs=tuple(mpcs), distance=distance)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
