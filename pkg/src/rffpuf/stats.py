"""Statistical suites for the PUF and RFFI models."""

from __future__ import annotations

import math

import numpy as np

from .puf import N_STAGES, puf_new, puf_stats
from .rffi import (
    ROGUE,
    ClassifierConfig,
    RffDatabase,
    calibrate_threshold,
    classify,
    emit_sample,
    enroll,
    rogue_detection_auc,
    transmitter_new,
)

# per-stage delay spread is 1, so sqrt(N+1) is the spread of the summed delay
DEFAULT_PUF_NOISE = 0.05 * math.sqrt(N_STAGES + 1)

PUF_LIMITS = {"uniqueness": (0.45, 0.55), "noiseless_reliability": 0.0, "min_pairs": 100}
RFFI_LIMITS = {"auc": 0.95, "false_rejection": 0.02}


def puf_suite(seed: int = 0, devices: int = 20, challenges: int = 256,
              noise_sigma: float = DEFAULT_PUF_NOISE) -> dict:
    noisy = [puf_new(seed * 100_003 + i, noise_sigma) for i in range(devices)]
    clean = [puf_new(seed * 100_003 + i, 0.0) for i in range(devices)]
    st_noisy = puf_stats(noisy, challenges, seed)
    st_clean = puf_stats(clean, challenges, seed)
    pairs = devices * (devices - 1) // 2
    lo, hi = PUF_LIMITS["uniqueness"]
    checks = {
        "uniqueness_in_range": lo <= st_clean["uniqueness"] <= hi,
        "noiseless_reliability_zero": st_clean["reliability"] == PUF_LIMITS["noiseless_reliability"],
        "enough_pairs": pairs >= PUF_LIMITS["min_pairs"],
    }
    return {
        "suite": "puf", "seed": seed, "devices": devices, "pairs": pairs, "challenges": challenges,
        "uniqueness": st_clean["uniqueness"],
        "uniformity": st_clean["uniformity"],
        "noiseless_reliability": st_clean["reliability"],
        "noisy_reliability": st_noisy["reliability"],
        "noise_sigma": noise_sigma,
        "limits": PUF_LIMITS, "checks": checks, "pass": all(checks.values()),
    }


def rffi_suite(seed: int = 0, known: int = 10, rogue: int = 5, noise: float = 0.05,
               dim: int = 64, k: int = 5, packets: int = 100, held_out: int = 100,
               percentile: float = 99.0) -> dict:
    rng = np.random.default_rng([seed, 0x5A7])
    base = seed * 1_000_003
    fps = {i: transmitter_new(base + i, dim) for i in range(1, known + 1)}
    rogues = [transmitter_new(base + 10_000 + j, dim) for j in range(rogue)]
    db = RffDatabase()
    for i, fp in fps.items():
        db = enroll(db, i, [emit_sample(fp, noise, rng, i) for _ in range(packets)])
    cfg = calibrate_threshold(db, ClassifierConfig(k=k), percentile)
    known_s = [emit_sample(fp, noise, rng, i) for i, fp in fps.items() for _ in range(held_out)]
    rogue_s = [emit_sample(fp, noise, rng) for fp in rogues for _ in range(held_out)]
    labels = [classify(db, cfg, s) for s in known_s]
    frr = float(np.mean([lab != s.emitted_by for lab, s in zip(labels, known_s)]))
    rogue_flagged = float(np.mean([classify(db, cfg, s) == ROGUE for s in rogue_s]))
    auc = rogue_detection_auc(db, cfg, known_s, rogue_s)
    checks = {"auc": auc >= RFFI_LIMITS["auc"], "false_rejection": frr <= RFFI_LIMITS["false_rejection"]}
    return {
        "suite": "rffi", "seed": seed, "known": known, "rogue": rogue, "noise": noise, "dim": dim,
        "k": k, "threshold": cfg.threshold, "auc": auc, "false_rejection": frr,
        "rogue_rejection": rogue_flagged, "held_out_known": len(known_s),
        "held_out_rogue": len(rogue_s), "limits": RFFI_LIMITS, "checks": checks,
        "pass": all(checks.values()),
    }


SUITES = {"puf": puf_suite, "rffi": rffi_suite}
