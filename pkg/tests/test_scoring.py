import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from builders import clip_of, walking_track
from hstgcnn.errors import FormatError, InvalidConfig, NoCoverage
from hstgcnn.net import ModelConfig, init_params
from hstgcnn.scoring import (BranchWeights, FrameScore, ScoringConfig, branch_l1, branch_l2, branch_l3, branch_scores,
                             combine, read_scores, score_clip, write_scores)
from hstgcnn.skeleton import HIGH, LOW

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_l1_is_max_person_mse():
    truths = [np.zeros((17, 2)), np.zeros((17, 2))]
    preds = [np.ones((17, 2)) * 0.5, np.ones((17, 2)) * 2.0]
    assert branch_l1(preds, truths) == 4.0
    with pytest.raises(NoCoverage):
        branch_l1([], [])


def test_l2_is_max_squared_center_error():
    pred = np.array([[3.0, 4.0], [1.0, 0.0]])
    assert branch_l2(pred, np.zeros((2, 2))) == 25.0
    with pytest.raises(NoCoverage):
        branch_l2(np.zeros((0, 2)), np.zeros((0, 2)))


def test_l3_example():
    observed = np.zeros((4, 2, 2))
    observed[:, 1] = [10.0, 0.0]
    truth = np.array([[0.0, 0.0], [10.0, 0.0]])
    pred = np.array([[1.0, 0.0], [10.0, 0.0]])
    # person 0 moved 1 px away from its observed positions; person 0 vs itself: 1 - 0
    assert branch_l3(pred, truth, observed) == 1.0
    pred2 = np.array([[0.0, 0.0], [8.0, 0.0]])
    assert branch_l3(pred2, truth, observed) == 4.0
    assert branch_l3(truth, truth, observed) == 0.0


def test_l3_signed_variant():
    observed = np.zeros((4, 2, 2))
    truth = np.array([[2.0, 0.0], [0.0, 2.0]])
    closer = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert branch_l3(closer, truth, observed, absolute=True) == 3.0
    assert branch_l3(closer, truth, observed, absolute=False) == 0.0


@given(arrays(np.float64, (2,), elements=finite), arrays(np.float64, (2,), elements=finite),
       arrays(np.float64, (4, 1, 2), elements=finite))
def test_l3_single_person_is_zero(pred, truth, observed):
    assert branch_l3(pred[None], truth[None], observed) == 0.0


@given(st.tuples(finite, finite, finite).map(lambda t: tuple(abs(x) for x in t)),
       st.integers(0, 2), st.floats(0.01, 10))
def test_combine_monotone_in_each_branch(ls, b, bump):
    w = BranchWeights((0.2, 0.3, 0.5), (1.0, 2.0, 4.0))
    up = list(ls)
    up[b] += bump
    assert combine(*up, w) > combine(*ls, w)
    assert combine(*ls, w) == pytest.approx(float(w.apply(np.array([ls]))[0]))


def test_combine_example():
    w = BranchWeights((0.5, 0.25, 0.25), (2.0, 1.0, 4.0))
    assert combine(4.0, 2.0, 8.0, w) == pytest.approx(0.5 * 2 + 0.25 * 2 + 0.25 * 2)


@pytest.mark.parametrize("weights,divisors", [((0.5, 0.5, 0.1), (1, 1, 1)), ((-0.1, 0.6, 0.5), (1, 1, 1)),
                                              ((1.0, 0.0), (1, 1, 1)), ((1.0, 0.0, 0.0), (1, 0, 1))])
def test_weight_validation(weights, divisors):
    with pytest.raises(InvalidConfig):
        BranchWeights(weights, divisors)


def _params(seed=0):
    return {LOW: init_params(ModelConfig(LOW), seed), HIGH: init_params(ModelConfig(HIGH), seed)}


def test_clip_scores_cover_every_predicted_frame():
    clip = clip_of([walking_track("a", range(0, 12)), walking_track("b", range(3, 9), start=(0, 40))], 12)
    bs = branch_scores(clip, _params())
    assert bs.frames.tolist() == list(range(4, 12))
    assert np.all(bs.values >= 0)
    one = clip_of([walking_track("a", range(0, 12))], 12)
    assert np.all(branch_scores(one, _params()).l3 == 0)
    scores = score_clip(clip, _params(), BranchWeights((1.0, 0.0, 0.0)))
    assert [s.score for s in scores] == pytest.approx(bs.l1.tolist())


def test_span_normalized_l1():
    clip = clip_of([walking_track("a", range(0, 8), noise=0.3)], 8)
    plain = branch_scores(clip, _params())
    spanned = branch_scores(clip, _params(), ScoringConfig(l1_span_normalize=True))
    assert np.allclose(spanned.l1 * 4, plain.l1)


def test_short_clip_has_no_scores():
    clip = clip_of([walking_track("a", range(0, 4))], 4)
    assert score_clip(clip, _params(), BranchWeights((1.0, 0.0, 0.0))) == []


def test_scores_round_trip(tmp_path):
    rows = [FrameScore("v1", 4, 0.5, 0.1, 0.2, 0.0), FrameScore("v2", 9, 1e-20, 3.0, 1.0, 2.5)]
    write_scores(tmp_path / "s.jsonl", rows)
    assert read_scores(tmp_path / "s.jsonl") == rows
    (tmp_path / "bad.jsonl").write_text('{"video_id": "v", "frame_idx": 1}\n')
    with pytest.raises(FormatError):
        read_scores(tmp_path / "bad.jsonl")


def test_l1_examples():
    t = np.zeros((17, 2))
    assert branch_l1([t], [t]) == 0.0
    assert branch_l1([t + 1], [t]) == 1.0
    assert branch_l1([t + np.sqrt(0.2), t + np.sqrt(0.9)], [t, t]) == pytest.approx(0.9)


def test_combine_table_triple():
    assert combine(1.0, 2.0, 3.0, BranchWeights((0.2, 0.5, 0.3))) == pytest.approx(2.1)
    assert combine(0.0, 0.0, 0.0, BranchWeights((0.2, 0.5, 0.3))) == 0.0
    assert combine(6.0, 5.0, 4.0, BranchWeights((1.0, 0.0, 0.0), (3.0, 1.0, 1.0))) == 2.0


def test_ten_frame_clip_scores_six_frames():
    clip = clip_of([walking_track("a", range(10)), walking_track("b", range(10), start=(30, 0))], 10)
    assert len(score_clip(clip, _params(), BranchWeights((0.2, 0.5, 0.3)))) == 6


def test_speed_burst_peak_is_localized(fitted_default):
    """A short burst starting at frame 20 peaks within four frames of it; a
    long one peaks somewhere inside the burst."""
    from hstgcnn.pipeline import score_corpus
    from hstgcnn.synth import AnomalySpec, SynthConfig, generate_scene
    for archetype, scene in (("sparse-large", "sparse-a"), ("dense-small", "dense-a")):
        for duration, lo, hi in ((3, 16, 24), (10, 20, 30)):
            for seed in range(4):
                clip = generate_scene(SynthConfig(archetype, seed=700 + seed, keypoint_noise=0.5,
                                                  anomalies=(AnomalySpec("speed-burst", 20, duration, 5.0),),
                                                  video_id=f"burst{seed}", scene_id=scene))
                scores = score_corpus([clip], fitted_default.groups, fitted_default.checkpoints)
                peak = max(scores, key=lambda s: s.score).frame_idx
                assert lo <= peak <= hi, (archetype, duration, seed, peak)
