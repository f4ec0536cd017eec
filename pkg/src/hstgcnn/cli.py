"""Command-line workflows: generate, cluster, train, fitweights, score, eval.

Settings come from an INI file (``--config``) layered over built-in defaults,
then ``--set section.key=value`` overrides, then the ``--seed``/``--jobs``/
``--workdir`` shortcuts. Exit codes: 0 success, 2 usage or config error,
3 data or format error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cluster import SceneGroups, assign_group, cluster_scenes, default_k
from .errors import InvalidConfig, PipelineError
from .evaluation import ablation_table, join_labels, write_curve_csv, write_summary
from .net import ModelConfig
from .pipeline import choose_k, evaluate, fit_weights, score_corpus, train_groups
from .scoring import ScoringConfig, read_scores, write_scores
from .skeleton import HIGH, LOW, read_jsonl, write_jsonl
from .synth import ANOMALY_KINDS, ARCHETYPES, CorpusConfig, SceneSpec, generate_corpus
from .train import TrainConfig, load_checkpoint, save_checkpoint

log = logging.getLogger("hstgcnn")

DEFAULTS = {
    "run": {"seed": "0", "jobs": "1"},
    "paths": {
        "workdir": "run",
        "train_corpus": "%(workdir)s/train.jsonl",
        "test_corpus": "%(workdir)s/test.jsonl",
        "groups": "%(workdir)s/groups.json",
        "checkpoints": "%(workdir)s/checkpoints",
        "losses": "%(workdir)s/losses.csv",
        "scores": "%(workdir)s/scores.jsonl",
        "summary": "%(workdir)s/eval.json",
        "curve": "%(workdir)s/curve.csv",
    },
    "synth": {
        "scenes": "dense-a:dense-small:8:8, sparse-a:sparse-large:8:8",
        "num_frames": "60",
        "anomaly_kinds": ", ".join(ANOMALY_KINDS),
        "anomalies_per_video": "1, 2",
        "duration_range": "8, 14",
        "magnitudes": "speed-burst:5.0, dispersal:4.0, pose-collapse:1.0, erratic-limbs:2.0",
        "keypoint_noise": "0.5",
        "outlier_prob": "0.002",
        "partial_prob": "0.15",
        "person_range": "",
    },
    "train": {"batch_size": "64", "epochs": "30", "lr_max": "0.1", "lr_min": "0.0", "momentum": "0.9",
              "level": "both"},
    "model": {"node_kernel": "3", "num_tconv": "5", "low_level_binary_edges": "false"},
    "cluster": {"k": "auto", "k_max": "12", "weight_step": "0.1"},
    "scoring": {"l3_absolute": "true", "l1_span_normalize": "false"},
}


@dataclass(frozen=True)
class Paths:
    train_corpus: Path
    test_corpus: Path
    groups: Path
    checkpoints: Path
    losses: Path
    scores: Path
    summary: Path
    curve: Path


@dataclass(frozen=True)
class RunConfig:
    paths: Paths
    corpus: CorpusConfig
    train: TrainConfig
    models: dict
    scoring: ScoringConfig
    k: Optional[int]  # None: scene-id count, else objective search
    k_max: int
    weight_step: float
    seed: int
    jobs: int


# --- config parsing ---------------------------------------------------------


def _items(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_pair(text: str, key: str) -> tuple[int, int]:
    parts = _items(text)
    if len(parts) != 2:
        raise InvalidConfig(f"{key}: expected two comma-separated integers, got {text!r}")
    return int(parts[0]), int(parts[1])


def _scenes(text: str) -> tuple[SceneSpec, ...]:
    out = []
    for item in _items(text):
        parts = item.split(":")
        if len(parts) != 4 or parts[1] not in ARCHETYPES:
            raise InvalidConfig(f"synth.scenes: expected id:archetype:train:test with archetype in "
                                f"{ARCHETYPES}, got {item!r}")
        out.append(SceneSpec(parts[0], parts[1], int(parts[2]), int(parts[3])))
    return tuple(out)


def _magnitudes(text: str) -> dict:
    out = {}
    for item in _items(text):
        kind, sep, value = item.partition(":")
        if not sep:
            raise InvalidConfig(f"synth.magnitudes: expected kind:value, got {item!r}")
        out[kind.strip()] = float(value)
    return out


def read_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise InvalidConfig(f"config file {path}: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot:
            raise InvalidConfig(f"--set expects section.key=value, got {item!r}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, option, value.strip())
    for section in cp.sections():
        unknown = set(cp[section]) - set(DEFAULTS.get(section, ()))
        if section not in DEFAULTS or unknown:
            where = section if section not in DEFAULTS else ", ".join(f"{section}.{k}" for k in sorted(unknown))
            raise InvalidConfig(f"unknown config setting: {where}")
    return cp


def build_run_config(cp: configparser.ConfigParser) -> RunConfig:
    """Typed settings from a parsed INI document; bad values raise InvalidConfig."""
    try:
        seed = cp.getint("run", "seed")
        p = cp["paths"]
        paths = Paths(*(Path(p[f]) for f in Paths.__dataclass_fields__))
        s = cp["synth"]
        person_range = _int_pair(s["person_range"], "synth.person_range") if s["person_range"].strip() else None
        corpus = CorpusConfig(
            scenes=_scenes(s["scenes"]),
            num_frames=s.getint("num_frames"),
            anomaly_kinds=tuple(_items(s["anomaly_kinds"])),
            anomalies_per_video=_int_pair(s["anomalies_per_video"], "synth.anomalies_per_video"),
            duration_range=_int_pair(s["duration_range"], "synth.duration_range"),
            magnitudes=_magnitudes(s["magnitudes"]),
            keypoint_noise=s.getfloat("keypoint_noise"),
            outlier_prob=s.getfloat("outlier_prob"),
            partial_prob=s.getfloat("partial_prob"),
            person_range=person_range,
            seed=seed,
        )
        corpus.validate()
        t = cp["train"]
        train = TrainConfig(batch_size=t.getint("batch_size"), epochs=t.getint("epochs"),
                            lr_max=t.getfloat("lr_max"), lr_min=t.getfloat("lr_min"),
                            momentum=t.getfloat("momentum"), seed=seed, level=t["level"])
        m = cp["model"]
        shared = dict(node_kernel=m.getint("node_kernel"), num_tconv=m.getint("num_tconv"))
        models = {LOW: ModelConfig(LOW, binary_edges=m.getboolean("low_level_binary_edges"), **shared),
                  HIGH: ModelConfig(HIGH, **shared)}
        c = cp["cluster"]
        k = None if c["k"].strip().lower() == "auto" else c.getint("k")
        if k is not None and k < 1:
            raise InvalidConfig(f"cluster.k must be >= 1 or 'auto', got {k}")
        sc = cp["scoring"]
        scoring = ScoringConfig(l3_absolute=sc.getboolean("l3_absolute"),
                                l1_span_normalize=sc.getboolean("l1_span_normalize"))
        jobs = cp.getint("run", "jobs")
        if jobs < 1:
            raise InvalidConfig("run.jobs must be >= 1")
        return RunConfig(paths, corpus, train, models, scoring, k, c.getint("k_max"),
                         c.getfloat("weight_step"), seed, jobs)
    except (configparser.Error, KeyError) as exc:
        raise InvalidConfig(f"config: {exc}") from None
    except InvalidConfig:
        raise
    except ValueError as exc:
        raise InvalidConfig(f"config: {exc}") from None


# --- artifacts --------------------------------------------------------------


def _require(*paths: Path) -> None:
    for p in paths:
        if not p.exists():
            raise FileNotFoundError(f"missing input {p}")


def checkpoint_path(directory: Path, group: int) -> Path:
    return directory / f"group-{group}.ckpt"


def load_checkpoints(cfg: RunConfig, groups: SceneGroups) -> dict:
    ckpts = {}
    for g in range(groups.k):
        path = checkpoint_path(cfg.paths.checkpoints, g)
        if path.exists():
            ckpts[g] = load_checkpoint(path)
    if not ckpts:
        raise FileNotFoundError(f"no checkpoints under {cfg.paths.checkpoints}")
    return ckpts


def write_losses(path: Path, ckpts: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "level", "epoch", "loss"])
        for g, ck in sorted(ckpts.items()):
            for level, hist in ck.history.items():
                for epoch, loss in enumerate(hist):
                    w.writerow([g, level, epoch, repr(float(loss))])


def _mkparent(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)


# --- commands ---------------------------------------------------------------


def cmd_generate(cfg: RunConfig, args) -> int:
    train, test = generate_corpus(cfg.corpus, jobs=cfg.jobs)
    for path, clips in ((cfg.paths.train_corpus, train), (cfg.paths.test_corpus, test)):
        _mkparent(path)
        write_jsonl(path, clips)
    positives = sum(int(c.frame_labels.sum()) for c in test)
    print(f"train: {len(train)} clips -> {cfg.paths.train_corpus}")
    print(f"test: {len(test)} clips, {positives} anomalous frames -> {cfg.paths.test_corpus}")
    return 0


def _cluster(cfg: RunConfig, clips) -> SceneGroups:
    k = cfg.k if cfg.k is not None else default_k(clips)
    if k is None:
        k = choose_k(clips, cfg.train, cfg.seed, cfg.models, cfg.scoring, cfg.k_max)
    return cluster_scenes(clips, k, cfg.seed)


def cmd_cluster(cfg: RunConfig, args) -> int:
    _require(cfg.paths.train_corpus)
    groups = _cluster(cfg, read_jsonl(cfg.paths.train_corpus))
    _mkparent(cfg.paths.groups)
    groups.save(cfg.paths.groups)
    for g in range(groups.k):
        print(f"group {g}: {', '.join(groups.members(g))}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    _require(cfg.paths.train_corpus)
    clips = read_jsonl(cfg.paths.train_corpus)
    groups = _cluster(cfg, clips)
    ckpts = train_groups(clips, groups, cfg.train, cfg.models)
    cfg.paths.checkpoints.mkdir(parents=True, exist_ok=True)
    for g, ck in ckpts.items():
        save_checkpoint(ck, checkpoint_path(cfg.paths.checkpoints, g))
    _mkparent(cfg.paths.groups)
    groups.save(cfg.paths.groups)
    _mkparent(cfg.paths.losses)
    write_losses(cfg.paths.losses, ckpts)
    for g, ck in sorted(ckpts.items()):
        losses = ", ".join(f"{lvl} {h[0]:.4g} -> {h[-1]:.4g}" for lvl, h in ck.history.items())
        print(f"group {g}: {losses}")
    return 0


def cmd_fitweights(cfg: RunConfig, args) -> int:
    _require(cfg.paths.train_corpus, cfg.paths.groups)
    clips = read_jsonl(cfg.paths.train_corpus)
    groups = SceneGroups.load(cfg.paths.groups)
    ckpts = load_checkpoints(cfg, groups)
    fit_weights(clips, groups, ckpts, cfg.scoring, cfg.weight_step)
    groups.save(cfg.paths.groups)
    for g, gw in sorted(groups.weights.items()):
        w = ", ".join(f"{x:.1f}" for x in gw.weights.weights)
        print(f"group {g}: W = ({w}) objective {gw.objective:.4f}")
    return 0


def score_summary(values: np.ndarray) -> str:
    if values.size == 0:
        return "frames 0"
    p50, p95 = np.percentile(values, [50, 95])
    return (f"frames {values.size} mean {values.mean():.4f} p50 {p50:.4f} p95 {p95:.4f} "
            f"max {values.max():.4f}")


def cmd_score(cfg: RunConfig, args) -> int:
    corpus = Path(args.corpus) if args.corpus else cfg.paths.test_corpus
    _require(corpus, cfg.paths.groups)
    clips = read_jsonl(corpus)
    groups = SceneGroups.load(cfg.paths.groups)
    ckpts = load_checkpoints(cfg, groups)
    scores = score_corpus(clips, groups, ckpts, cfg.scoring, jobs=cfg.jobs)
    out = Path(args.out) if args.out else cfg.paths.scores
    _mkparent(out)
    write_scores(out, scores)
    print(score_summary(np.array([s.score for s in scores])))
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    corpus = Path(args.corpus) if args.corpus else cfg.paths.test_corpus
    scores_path = Path(args.scores) if args.scores else cfg.paths.scores
    _require(corpus, scores_path, cfg.paths.groups)
    clips = read_jsonl(corpus)
    groups = SceneGroups.load(cfg.paths.groups)
    scores = read_scores(scores_path)
    summary = evaluate(scores, clips, groups, ablation=args.ablation)
    print(f"frame-level AUC {summary['auc']:.4f} over {summary['scored_frames']} frames "
          f"({summary['positive_frames']} anomalous, {summary['excluded_frames']} unscored)")
    if "constant_velocity_auc" in summary:
        print(f"constant-velocity reference AUC {summary['constant_velocity_auc']:.4f}")
    if args.ablation:
        print(ablation_table(summary["ablation"]))
    _mkparent(cfg.paths.summary)
    write_summary(cfg.paths.summary, summary)
    group_of = {c.video_id: assign_group(c, groups) for c in clips}
    _mkparent(cfg.paths.curve)
    write_curve_csv(cfg.paths.curve, join_labels(scores, clips, group_of))
    return 0


COMMANDS = {
    "generate": (cmd_generate, "write synthetic train (normal) and test (labelled) corpora"),
    "cluster": (cmd_cluster, "group training clips into scene groups"),
    "train": (cmd_train, "cluster scenes and train both predictors per group"),
    "fitweights": (cmd_fitweights, "fit per-group branch weights on the training corpus"),
    "score": (cmd_score, "write per-frame anomaly scores"),
    "eval": (cmd_eval, "frame-level ROC AUC, optional branch ablation"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file layered over the built-in defaults")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="shortcut for --set run.seed=N")
    common.add_argument("--jobs", type=int, help="worker processes for generation and scoring")
    common.add_argument("--workdir", help="directory holding all default artifact paths")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="hstgcnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, text) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=text, description=text)
        sp.set_defaults(func=fn)
        if name in ("score", "eval"):
            sp.add_argument("--corpus", help="corpus JSONL (default: paths.test_corpus)")
        if name == "score":
            sp.add_argument("--out", help="scores JSONL (default: paths.scores)")
        if name == "eval":
            sp.add_argument("--scores", help="scores JSONL (default: paths.scores)")
            sp.add_argument("--ablation", action="store_true", help="AUC for every branch subset")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = list(args.set)
    for key, value in (("run.seed", args.seed), ("run.jobs", args.jobs), ("paths.workdir", args.workdir)):
        if value is not None:
            overrides.append(f"{key}={value}")
    try:
        cfg = build_run_config(read_config(args.config, overrides))
        return args.func(cfg, args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
