from dataclasses import replace

import numpy as np
import pytest

from hstgcnn.errors import InvalidConfig
from hstgcnn.skeleton import track_geometry, write_jsonl
from hstgcnn.synth import ANOMALY_KINDS, AnomalySpec, CorpusConfig, SceneSpec, SynthConfig, corpus_plan, \
    generate_corpus, generate_scene

SMALL = CorpusConfig(scenes=(SceneSpec("d", "dense-small", 2, 3), SceneSpec("s", "sparse-large", 2, 3)),
                     num_frames=40)


def test_scene_is_deterministic():
    a, b = generate_scene(SynthConfig(seed=7)), generate_scene(SynthConfig(seed=7))
    assert all(np.array_equal(x.joints, y.joints) for x, y in zip(a.tracks, b.tracks))
    c = generate_scene(SynthConfig(seed=8))
    assert not np.array_equal(a.tracks[0].joints, c.tracks[0].joints)


@pytest.mark.parametrize("archetype,lo,hi,height", [("dense-small", 8, 15, 20.0), ("sparse-large", 1, 3, 120.0)])
def test_archetypes(archetype, lo, hi, height):
    clip = generate_scene(SynthConfig(archetype, seed=3, keypoint_noise=0.0, outlier_prob=0.0))
    assert lo <= len(clip.tracks) <= hi
    for t in clip.tracks:
        _, h, _ = track_geometry(t)
        assert np.all(np.abs(h / height - 1) < 0.25)


def test_anomaly_labels_and_effect():
    spec = AnomalySpec("speed-burst", 20, 10, 5.0, person=0)
    base = SynthConfig(seed=1, keypoint_noise=0.0, outlier_prob=0.0, person_range=(1, 1))
    normal, odd = generate_scene(base), generate_scene(replace(base, anomalies=(spec,)))
    assert normal.frame_labels.sum() == 0
    assert odd.frame_labels.tolist() == [0] * 20 + [1] * 10 + [0] * 30
    step = lambda clip: np.linalg.norm(np.diff(track_geometry(clip.tracks[0])[0], axis=0), axis=1)
    assert step(odd)[22] == pytest.approx(5 * step(normal)[22], rel=1e-6)


@pytest.mark.parametrize("kind", ANOMALY_KINDS)
def test_every_kind_runs(kind):
    clip = generate_scene(SynthConfig("dense-small", seed=2, anomalies=(AnomalySpec(kind, 10, 8, 2.0),)))
    assert clip.frame_labels.sum() == 8


@pytest.mark.parametrize("cfg", [SynthConfig(archetype="medium"), SynthConfig(person_range=(3, 1)),
                                 SynthConfig(anomalies=(AnomalySpec("moonwalk", 1, 2, 1.0),)),
                                 SynthConfig(anomalies=(AnomalySpec("dispersal", 55, 10, 1.0),)),
                                 SynthConfig(anomalies=(AnomalySpec("dispersal", 5, 10, 0.0),))])
def test_synth_config_validation(cfg):
    with pytest.raises(InvalidConfig):
        generate_scene(cfg)


@pytest.mark.parametrize("changes", [dict(scenes=()), dict(anomaly_kinds=("nope",)), dict(duration_range=(5, 50)),
                                     dict(magnitudes={"speed-burst": 0.0}), dict(anomalies_per_video=(2, 1))])
def test_corpus_config_validation(changes):
    with pytest.raises(InvalidConfig):
        generate_corpus(replace(SMALL, **changes))


def test_corpus_splits():
    train, test = generate_corpus(SMALL)
    assert [c.video_id for c in train] == ["d-train-00", "d-train-01", "s-train-00", "s-train-01"]
    assert len(test) == 6
    assert all(c.frame_labels.sum() == 0 for c in train)
    assert all(c.frame_labels[:5].sum() == 0 and c.frame_labels.sum() > 0 for c in test)
    assert {c.scene_id for c in train} == {"d", "s"}


def test_plan_seeds_are_fixed_up_front():
    plan = corpus_plan(SMALL)
    assert len({c.seed for _, c in plan}) == len(plan)
    assert [c.seed for _, c in corpus_plan(SMALL)] == [c.seed for _, c in plan]


def test_parallel_generation_is_identical(tmp_path):
    for jobs in (1, 2):
        train, test = generate_corpus(SMALL, jobs=jobs)
        write_jsonl(tmp_path / f"{jobs}.jsonl", train + test)
    assert (tmp_path / "1.jsonl").read_bytes() == (tmp_path / "2.jsonl").read_bytes()


def test_label_count_is_sum_of_durations():
    specs = (AnomalySpec("dispersal", 5, 7, 2.0), AnomalySpec("erratic-limbs", 30, 9, 2.0, 1))
    clip = generate_scene(SynthConfig("dense-small", seed=4, anomalies=specs))
    assert clip.frame_labels.sum() == 16
