import numpy as np
import pytest

from rffpuf.puf import N_STAGES, challenge_bits, puf_eval, puf_new, puf_stats
from rffpuf.rffi import (
    ROGUE,
    CalibrationError,
    ClassifierConfig,
    RffDatabase,
    calibrate_threshold,
    classify,
    emit_sample,
    enroll,
    knn_score,
    rogue_detection_auc,
    transmitter_new,
)


def _arbiter_loop(weights, bits):
    # textbook additive delay model, one stage at a time
    out = []
    for w in weights:
        delay = w[-1]
        parity = 1
        for i in range(N_STAGES - 1, -1, -1):
            parity *= 1 - 2 * int(bits[i])
            delay += w[i] * parity
        out.append(1 if delay > 0 else 0)
    return np.packbits(np.array(out, dtype=np.uint8)).tobytes()


@pytest.mark.parametrize("c", [bytes(32), bytes([0xFF] * 32), bytes(range(32))])
def test_puf_matches_loop_model(c):
    dev = puf_new(42)
    assert puf_eval(dev, c) == _arbiter_loop(dev.weights, challenge_bits(c))


def test_puf_deterministic_and_device_specific():
    c = bytes(range(32))
    assert puf_eval(puf_new(1), c) == puf_eval(puf_new(1), c)
    assert puf_eval(puf_new(1), c) != puf_eval(puf_new(2), c)


def test_noisy_puf_needs_rng():
    with pytest.raises(ValueError):
        puf_eval(puf_new(1, 0.5), bytes(32))
    with pytest.raises(ValueError):
        puf_new(1, -1.0)


def test_puf_stats_small_population():
    st = puf_stats([puf_new(i) for i in range(6)], 64)
    assert st["reliability"] == 0.0
    assert 0.4 < st["uniqueness"] < 0.6
    with pytest.raises(ValueError):
        puf_stats([puf_new(0)], 8)


def test_noise_raises_intra_distance():
    st = puf_stats([puf_new(i, 2.0) for i in range(4)], 64)
    assert 0 < st["reliability"] < 0.2


def _db(n=3, packets=30, noise=0.05, seed=0):
    rng = np.random.default_rng(seed)
    fps = {i: transmitter_new(i) for i in range(1, n + 1)}
    db = RffDatabase()
    for i, fp in fps.items():
        db = enroll(db, i, [emit_sample(fp, noise, rng, i) for _ in range(packets)])
    return fps, db, rng


def test_rffi_identifies_and_rejects():
    fps, db, rng = _db()
    cfg = calibrate_threshold(db, ClassifierConfig(k=5))
    assert classify(db, cfg, emit_sample(fps[2], 0.0, rng)) == 2
    assert classify(db, cfg, emit_sample(transmitter_new(999), 0.05, rng)) == ROGUE


def test_calibration_needs_enough_samples():
    _, db, _ = _db(packets=3)
    with pytest.raises(CalibrationError):
        calibrate_threshold(db, ClassifierConfig(k=5))


def test_classifier_config_validation():
    with pytest.raises(ValueError):
        ClassifierConfig(k=0)
    with pytest.raises(ValueError):
        ClassifierConfig(threshold=0)
    with pytest.raises(ValueError):
        ClassifierConfig(metric="cosine")


def test_database_json_roundtrip_and_without():
    _, db, _ = _db(n=2, packets=6)
    back = RffDatabase.from_json(db.to_json())
    assert back.ids() == [1, 2]
    assert np.allclose(back.entries[1], db.entries[1])
    assert 1 not in db.without(1) and 1 in db


def test_auc_matches_rank_statistic():
    fps, db, rng = _db(noise=0.3, seed=3)
    cfg = calibrate_threshold(db, ClassifierConfig(k=5))
    known = [emit_sample(fp, 0.3, rng, i) for i, fp in fps.items() for _ in range(20)]
    rogue = [emit_sample(transmitter_new(500 + j), 0.3, rng) for j in range(3) for _ in range(20)]
    sk = [knn_score(db, cfg, s.vector)[0] for s in known]
    sr = [knn_score(db, cfg, s.vector)[0] for s in rogue]
    # Mann-Whitney U / (n1 n2), ties counted half
    u = sum((r > k) + 0.5 * (r == k) for r in sr for k in sk)
    assert rogue_detection_auc(db, cfg, known, rogue) == pytest.approx(u / (len(sk) * len(sr)))
