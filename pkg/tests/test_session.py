import numpy as np
import pytest

from pcal.datasets import ShapeSpec, generate_shape
from pcal.errors import InvalidParameterError, PhaseError
from pcal.labels import UNLABELED, Provenance
from pcal.oracle import OraclePolicy, select_seeds
from pcal.session import (Correction, Phase, create_session, dump_events,
                          finalize, replay_events, submit_corrections,
                          submit_seeds, train_and_predict)
from pcal.trainer import TrainConfig

FAST = TrainConfig(epochs_per_round=5, rng_seed=0)


@pytest.fixture(scope="module")
def shape():
    return generate_shape(ShapeSpec(family="chair", part_count=3, points_n=256,
                                    rng_seed=11))


def _fresh(shape):
    cloud, _ = shape
    return create_session(cloud, 3, None, train_config=FAST)


def _seeds(shape):
    cloud, gt = shape
    return select_seeds(cloud, gt, OraclePolicy())


def test_create_session_state(shape):
    s = _fresh(shape)
    assert s.phase == Phase.SEEDING
    assert s.round == 0
    assert s.clicks_total == 0
    assert not s.labels.labeled_mask.any()
    assert s.cloud.normals is not None        # estimated for normal_angle growing


def test_create_rejects_small_c(shape):
    with pytest.raises(InvalidParameterError):
        create_session(shape[0], 1, None)


def test_seed_validation(shape):
    s = _fresh(shape)
    with pytest.raises(InvalidParameterError):
        submit_seeds(s, [(0, 0), (1, 1)])                 # class 2 uncovered
    with pytest.raises(InvalidParameterError):
        submit_seeds(s, [(0, 0), (0, 1), (1, 2)])         # same point, two classes
    with pytest.raises(InvalidParameterError):
        submit_seeds(s, [(10 ** 6, 0), (1, 1), (2, 2)])
    with pytest.raises(InvalidParameterError):
        submit_seeds(s, [(0, 7), (1, 1), (2, 2)])
    assert s.phase == Phase.SEEDING                       # rejected ops change nothing
    assert s.clicks_total == 0


def test_seeding_grows_and_advances(shape):
    s = _fresh(shape)
    seeds = _seeds(shape)
    submit_seeds(s, seeds)
    assert s.phase == Phase.TRAINING
    assert s.clicks_total == len(seeds)                   # growing costs no clicks
    assert (s.labels.provenance == Provenance.GROWN).sum() > 0
    for pid, cls in seeds:
        assert s.labels.labels[pid] == cls
        assert s.labels.provenance[pid] == Provenance.SEED
    with pytest.raises(PhaseError):
        submit_seeds(s, seeds)                            # only legal once


def test_train_requires_labels_and_phase(shape):
    s = _fresh(shape)
    with pytest.raises(PhaseError):
        train_and_predict(s)
    with pytest.raises(PhaseError):
        submit_corrections(s, [Correction(0, 0)])
    with pytest.raises(PhaseError):
        finalize(s)


def test_train_and_predict_fills_cloud(shape):
    s = _fresh(shape)
    submit_seeds(s, _seeds(shape))
    train_and_predict(s)
    assert s.phase == Phase.REVIEWING
    assert s.round == 1
    assert s.labels.is_full
    # Grown labels are demoted: only Seed/Corrected survive prediction
    assert not (s.labels.provenance == Provenance.GROWN).any()
    assert set(np.unique(s.labels.provenance)) <= {int(Provenance.SEED),
                                                   int(Provenance.PREDICTED)}


def test_corrections_flow(shape):
    s = _fresh(shape)
    seeds = _seeds(shape)
    submit_seeds(s, seeds)
    train_and_predict(s)
    with pytest.raises(InvalidParameterError):
        submit_corrections(s, [])
    seed_pid, seed_cls = seeds[0]
    with pytest.raises(InvalidParameterError):
        submit_corrections(s, [Correction(seed_pid, (seed_cls + 1) % 3)])
    # correcting a Seed to its own class is a no-op but legal
    pred = next(i for i in range(len(s.labels))
                if s.labels.provenance[i] == Provenance.PREDICTED)
    before = s.clicks_total
    submit_corrections(s, [Correction(pred, 2, grow=True)])
    assert s.phase == Phase.TRAINING
    assert s.clicks_total == before + 1                   # grow adds no clicks
    assert s.labels.labels[pred] == 2
    assert s.labels.provenance[pred] == Provenance.CORRECTED
    train_and_predict(s)
    assert s.labels.labels[pred] == 2                     # corrections survive
    assert s.labels.provenance[pred] == Provenance.CORRECTED


def test_finalize_requires_reviewing_and_full(shape):
    s = _fresh(shape)
    submit_seeds(s, _seeds(shape))
    with pytest.raises(PhaseError):
        finalize(s)                                       # still in Training
    train_and_predict(s)
    finalize(s)
    assert s.phase == Phase.FINALIZED
    for op in (lambda: train_and_predict(s),
               lambda: submit_corrections(s, [Correction(0, 0)]),
               lambda: finalize(s)):
        with pytest.raises(PhaseError):
            op()


def test_click_accounting_by_round(shape):
    s = _fresh(shape)
    seeds = _seeds(shape)
    submit_seeds(s, seeds)
    train_and_predict(s)
    pred = [i for i in range(len(s.labels))
            if s.labels.provenance[i] == Provenance.PREDICTED][:3]
    submit_corrections(s, [Correction(p, 0) for p in pred])
    assert s.clicks_total == len(seeds) + 3
    rounds = [e.round for e in s.click_log]
    assert rounds == [0] * len(seeds) + [1, 1, 1]


def test_event_replay_reproduces_labels(shape):
    cloud, _ = shape
    s = _fresh(shape)
    submit_seeds(s, _seeds(shape))
    train_and_predict(s)
    pred = [i for i in range(len(s.labels))
            if s.labels.provenance[i] == Provenance.PREDICTED][:2]
    submit_corrections(s, [Correction(pred[0], 1, grow=True),
                           Correction(pred[1], 2)])
    train_and_predict(s)
    finalize(s)
    log = dump_events(s)
    replayed = replay_events(cloud, log)
    np.testing.assert_array_equal(replayed.labels.labels, s.labels.labels)
    np.testing.assert_array_equal(replayed.labels.provenance, s.labels.provenance)
    assert replayed.clicks_total == s.clicks_total
    assert replayed.phase == Phase.FINALIZED


def test_replay_rejects_bad_log(shape):
    with pytest.raises(InvalidParameterError):
        replay_events(shape[0], '{"op":"train"}\n')
