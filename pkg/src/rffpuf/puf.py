"""Additive-delay arbiter PUF model.

One logical evaluation drives 256 independent 256-stage arbiter chains with the
same challenge, giving a 256-bit response.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import observe
from .crypto import BLOCK_BYTES

N_STAGES = 256
RESPONSE_BITS = 256
_PUF_STREAM = 0x50F


@dataclass(frozen=True, eq=False)
class PufDevice:
    device_seed: int
    noise_sigma: float = 0.0
    weights: np.ndarray = field(repr=False, default=None)


def puf_new(device_seed: int, noise_sigma: float = 0.0) -> PufDevice:
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    rng = np.random.default_rng([device_seed, _PUF_STREAM])
    weights = rng.standard_normal((RESPONSE_BITS, N_STAGES + 1))
    weights.setflags(write=False)
    return PufDevice(device_seed, float(noise_sigma), weights)


def parity_features(challenges: np.ndarray) -> np.ndarray:
    """Map (n, 256) challenge bits to (n, 257) arbiter parity vectors in {-1, +1}.

    phi_i = prod_{j >= i} (1 - 2 c_j), with a trailing constant 1 for the bias.
    """
    signs = 1 - 2 * challenges.astype(np.int8)
    phi = np.cumprod(signs[:, ::-1], axis=1)[:, ::-1]
    ones = np.ones((challenges.shape[0], 1), dtype=phi.dtype)
    return np.hstack([phi, ones]).astype(np.float64)


def challenge_bits(c: bytes) -> np.ndarray:
    if len(c) != BLOCK_BYTES:
        raise ValueError("challenge must be 256 bits")
    return np.unpackbits(np.frombuffer(c, dtype=np.uint8))


def response_bits(dev: PufDevice, challenges: np.ndarray, rng=None) -> np.ndarray:
    """Vectorised evaluation: (n, 256) challenge bits -> (n, 256) response bits."""
    delay = parity_features(challenges) @ dev.weights.T
    if dev.noise_sigma > 0:
        if rng is None:
            raise ValueError("a noisy device needs an rng")
        delay = delay + rng.normal(0.0, dev.noise_sigma, size=delay.shape)
    return (delay > 0).astype(np.uint8)  # d == 0 resolves to 0


def puf_eval(dev: PufDevice, c: bytes, rng=None) -> bytes:
    bits = response_bits(dev, challenge_bits(c)[None, :], rng)[0]
    out = np.packbits(bits).tobytes()
    t = observe.tracer()
    if t is not None:
        t.on_puf(dev.device_seed, c, out)
    return out


def puf_stats(population, n_challenges: int, seed: int = 0) -> dict:
    """Uniqueness, reliability and uniformity over a device population.

    Reliability re-evaluates every challenge once more under each device's own
    noise and compares against the noiseless reference response.
    """
    if len(population) < 2:
        raise ValueError("puf_stats needs at least two devices")
    rng = np.random.default_rng(seed)
    ch = rng.integers(0, 2, size=(n_challenges, N_STAGES), dtype=np.uint8)
    refs = []
    intra = []
    for dev in population:
        clean = PufDevice(dev.device_seed, 0.0, dev.weights)
        ref = response_bits(clean, ch)
        refs.append(ref)
        noisy = response_bits(dev, ch, rng) if dev.noise_sigma > 0 else ref
        intra.append(np.mean(ref != noisy))
    inter = [np.mean(a != b) for a, b in itertools.combinations(refs, 2)]
    return {
        "uniqueness": float(np.mean(inter)),
        "reliability": float(np.mean(intra)),
        "uniformity": float(np.mean([r.mean() for r in refs])),
        "n_devices": len(population),
        "n_challenges": n_challenges,
        "noise_sigma": float(max(d.noise_sigma for d in population)),
    }
