"""
End-to-end tests: student training, checkpoints, evaluation, ablation and CLI
"""

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from src.ignet_core.config import RunConfig, SceneConfig, load_run_config
from src.ignet_core.errors import CameraError, CheckpointError, ConfigError, ShapeError, TrainingDivergedError
from src.ignet_core.numerics import ParamVector, Tape, Var, add, grad, value_of
from src.ignet_data.dataset import generate_dataset, write_dataset
from src.ignet_guide.model import guide_features
from src.ignet_guide.trainer import guide_digest, save_guide, train_guide
from src.ignet_pipeline import training
from src.ignet_pipeline.ablation import (
    ABLATION_ROWS,
    REFERENCE_ROW,
    format_ablation,
    run_ablation,
    write_ablation,
)
from src.ignet_pipeline.checkpoint import load_checkpoint, network_for, save_checkpoint
from src.ignet_pipeline.cli import build_parser, classify, main
from src.ignet_pipeline.evaluation import evaluate
from src.ignet_pipeline.training import FeatureCache, build_samples, draw_batch, student_losses, train_student
from src.ignet_student.losses import FLAG_NO_CONTRASTIVE_PAIRS
from src.ignet_student.network import Prediction
from src.ignet_student.teacher import init_teacher
from tests.helpers import make_frame, ring_cloud

SCENE = SceneConfig(azimuth_step_deg=6.0, rings=4, image_width=16, image_height=8)
SCENE_YAML = "azimuth_step_deg: 6.0\nrings: 4\nimage_width: 16\nimage_height: 8\n"


@pytest.fixture(scope="module")
def data():
    return generate_dataset(3, 0, scene=SCENE, scribble_budget=0.1, val_frames=1, source_frames=2)


@pytest.fixture(scope="module")
def cfg():
    return RunConfig(
        num_classes=SCENE.num_classes,
        feature_dim=4,
        hidden=8,
        steps=3,
        lr=0.05,
        alpha=0.9,
        batch_size=2,
        log_every=0,
        guide_steps=2,
        guide_hidden=6,
    )


@pytest.fixture(scope="module")
def guide(data, cfg):
    return train_guide(data.source, data.train, cfg.guide_config(), cfg.num_classes)


def _assert_same_weights(a, b):
    assert a.keys() == b.keys()
    for name in a:
        np.testing.assert_array_equal(a[name], b[name], err_msg=name)


def test_student_training_is_deterministic(data, cfg, guide):
    """Test that two identical runs agree bit for bit"""
    run_cfg = cfg.with_toggles("mt,ig,cl,fovmix")
    first = train_student(run_cfg, data, guide)
    second = train_student(run_cfg, data, guide)
    _assert_same_weights(first.params, second.params)
    _assert_same_weights(first.teacher.shadow, second.teacher.shadow)
    assert first.history == second.history
    assert len(first.history) == 3
    assert set(first.history[0]) == {"step", "ce", "mt", "ig", "cl", "total"}
    assert first.teacher.step == 3


def test_resumed_run_matches_uninterrupted_run(tmp_path, data, cfg, guide):
    """Test that resuming from a checkpoint repeats the uninterrupted run"""
    run_cfg = replace(cfg.with_toggles("mt,ig,fovmix"), steps=4)
    full = train_student(run_cfg, data, guide)
    half = train_student(replace(run_cfg, steps=2), data, guide)
    path = save_checkpoint(tmp_path / "half.nac", half)
    resumed = train_student(run_cfg, data, guide, resume=load_checkpoint(path))
    assert resumed.step == 4
    _assert_same_weights(resumed.params, full.params)
    _assert_same_weights(resumed.teacher.shadow, full.teacher.shadow)
    assert resumed.history == full.history


def test_checkpoint_roundtrip(tmp_path, data, cfg, guide):
    """Test saving and loading a student checkpoint"""
    ckpt = train_student(cfg.with_toggles("mt,ig"), data, guide, guide_ref=("g.nac", guide_digest(guide)))
    back = load_checkpoint(save_checkpoint(tmp_path / "s.nac", ckpt))
    _assert_same_weights(back.params, ckpt.params)
    assert back.config == ckpt.config
    assert back.step == 3
    assert back.teacher.alpha == 0.9
    assert back.guide_path == "g.nac"
    assert back.guide_digest == guide_digest(guide)
    assert back.history == ckpt.history


def test_load_checkpoint_rejects_guides(tmp_path, guide):
    """Test that a guide container is not accepted as a student"""
    path = save_guide(tmp_path / "guide.nac", guide)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_student_configuration_errors(data, cfg, guide):
    """Test missing guide, class count and feature dim mismatches"""
    with pytest.raises(ConfigError):
        train_student(cfg.with_toggles("mt,ig"), data)
    with pytest.raises(ConfigError):
        train_student(replace(cfg, num_classes=5), data)
    with pytest.raises(ConfigError):
        train_student(replace(cfg.with_toggles("ig"), feature_dim=5), data, guide)


def test_guide_is_ignored_without_image_guidance(data, cfg, guide):
    """Test that a guide has no effect when image guidance is off"""
    with_guide = train_student(cfg.with_toggles("mt"), data, guide)
    without = train_student(cfg.with_toggles("mt"), data)
    _assert_same_weights(with_guide.params, without.params)
    assert set(with_guide.history[0]) == {"step", "ce", "mt", "total"}


def test_divergence_names_stage_step_and_every_term(monkeypatch, data, cfg):
    """Test that a non-finite term stops training and the error carries every term"""
    monkeypatch.setattr(training, "supervised_ce", lambda *args: Var(np.array(np.nan)))
    with pytest.raises(TrainingDivergedError) as exc:
        train_student(cfg.with_toggles("mt"), data)
    assert exc.value.stage == "student"
    assert exc.value.step == 0
    assert set(exc.value.terms) == {"ce", "mt"}
    assert np.isnan(exc.value.terms["ce"])
    assert np.isfinite(exc.value.terms["mt"])
    assert "ce=nan" in str(exc.value) and "mt=" in str(exc.value)


def test_runaway_student_loss_is_divergence(monkeypatch, data, cfg):
    """Test that a huge finite loss stops training"""
    monkeypatch.setattr(training, "supervised_ce", lambda *args: Var(np.array(1e7)))
    with pytest.raises(TrainingDivergedError) as exc:
        train_student(cfg.with_toggles("mt"), data)
    assert exc.value.reason == "loss out of range"
    assert set(exc.value.terms) == {"ce", "mt", "total"}
    assert exc.value.terms["ce"] == 1e7


def test_non_finite_student_weights_are_divergence(monkeypatch, data, cfg):
    """Test that an update producing non-finite weights stops training"""

    def nan_grad(loss, leaves):
        return ParamVector({name: np.full(np.shape(value_of(leaf)), np.inf) for name, leaf in leaves.items()})

    monkeypatch.setattr(training, "grad", nan_grad)
    with pytest.raises(TrainingDivergedError) as exc:
        train_student(cfg, data)
    assert exc.value.reason == "non-finite weights"
    assert exc.value.step == 0
    assert np.isfinite(exc.value.terms["total"])


def test_semi_supervised_batches_contain_a_labeled_frame():
    """Test that semi-supervised batches always hold a labeled frame"""
    frames = [
        make_frame(ring_cloud(20), np.zeros(20, dtype=int), frame_labeled=(i == 3), seed=i)
        for i in range(6)
    ]
    for seed in range(20):
        index = draw_batch(np.random.default_rng(seed), frames, 2, semi=True)
        assert len(set(index)) == 2
        assert any(frames[i].frame_labeled for i in index)


def test_semi_supervised_training_with_fovmix(cfg, guide):
    """Test a semi-supervised run with every component on"""
    semi = generate_dataset(3, 1, scene=SCENE, semi_rate=0.34, val_frames=1, source_frames=1)
    assert semi.semi
    ckpt = train_student(cfg.with_toggles("mt,ig,cl,fovmix"), semi, guide)
    assert ckpt.params.all_finite()


def test_evaluate_student_and_teacher(data, cfg):
    """Test evaluation of both the student and its teacher"""
    ckpt = train_student(cfg.with_toggles("mt"), data)
    for use_teacher in (False, True):
        report = evaluate(ckpt, data.val, data.scene, use_teacher=use_teacher, reference_miou=0.5)
        assert 0.0 <= report.miou <= 1.0
        assert report.populations["points"] == sum(f.num_points for f in data.val)
        assert report.class_names == SCENE.class_names


@pytest.mark.slow
def test_ablation_table(tmp_path, data, cfg):
    """Test the ablation table layout and its written forms"""
    table = run_ablation(cfg, data, seeds=[0, 1])
    assert [row.name for row in table.rows] == [name for name, _ in ABLATION_ROWS]
    assert table.reference.name == REFERENCE_ROW
    assert table.reference.rel == 1.0
    assert table.row("baseline").delta_rel == 0.0
    for row in table.rows:
        assert len(row.per_seed_miou) == 2
        assert row.miou == pytest.approx(np.mean(row.per_seed_miou))
        assert row.delta_rel == pytest.approx(row.rel - table.row("baseline").rel)
    text = format_ablation(table)
    assert "dense reference" in text and "border_acc" in text
    path = write_ablation(table, tmp_path / "ablation.txt")
    kv = (tmp_path / "ablation.txt.kv").read_text()
    assert path.read_text() == text
    assert "mt+ig.border_acc=" in kv
    assert "dense.miou=" in kv


def test_student_training_leaves_the_guide_untouched(data, cfg, guide):
    """Test that stage-2 training never changes the frozen guide"""
    frame = data.train[0]
    digest = guide_digest(guide)
    before = {name: np.array(value) for name, value in guide.parameters().items()}
    features = guide_features(guide, frame.image, frame.cam)
    train_student(cfg.with_toggles("mt,ig,cl,fovmix"), data, guide)
    assert guide_digest(guide) == digest
    _assert_same_weights(guide.parameters(), before)
    np.testing.assert_array_equal(guide_features(guide, frame.image, frame.cam), features)


class _OffsetNet:
    """Student whose outputs carry per-point offsets recorded on the tape"""

    def __init__(self, net, logit_offset, aux_offset):
        self.net = net
        self.logit_offset = logit_offset
        self.aux_offset = aux_offset

    def forward(self, params, features):
        pred = self.net.forward(params, features)
        return Prediction(
            logits=add(pred.logits, self.logit_offset),
            aux_features=add(pred.aux_features, self.aux_offset),
        )


def _supervised_outputs(cfg, data, guide, toggles):
    """(point, head) pairs of one batch that receive a nonzero gradient"""
    run_cfg = cfg.with_toggles(toggles)
    net = network_for(run_cfg)
    params = net.init(np.random.default_rng(0))
    # a teacher that disagrees with the student
    teacher = init_teacher(net.init(np.random.default_rng(1)), run_cfg.alpha)
    cache = FeatureCache(data.train, data.scene.max_range, guide if run_cfg.ig else None)
    samples = build_samples(run_cfg, data.train, [0, 1], False, np.random.default_rng(0), cache)
    n = sum(len(features) for _, features, _ in samples)
    with Tape() as tape:
        offsets = {
            "logits": tape.watch(np.zeros((n, run_cfg.num_classes))),
            "aux": tape.watch(np.zeros((n, run_cfg.feature_dim))),
        }
        shifted = _OffsetNet(net, offsets["logits"], offsets["aux"])
        bundle = student_losses(run_cfg, shifted, params, teacher, samples, cache)
        g = grad(bundle.total, offsets)
    weak = np.concatenate([sample.weak_mask for sample, _, _ in samples])
    pairs = {(int(i), head) for head in g for i in np.flatnonzero(np.any(g[head] != 0.0, axis=1))}
    return pairs, weak, bundle.flags


def test_supervision_grows_with_each_component(data, cfg, guide):
    """Test that each added component supervises a superset of points"""
    baseline, weak, _ = _supervised_outputs(cfg, data, guide, "")
    mt, _, _ = _supervised_outputs(cfg, data, guide, "mt")
    ig, _, _ = _supervised_outputs(cfg, data, guide, "mt,ig")
    cl, _, flags = _supervised_outputs(cfg, data, guide, "mt,ig,cl")

    assert baseline == {(int(i), "logits") for i in np.flatnonzero(weak)}
    assert mt == {(i, "logits") for i in range(len(weak))}
    assert baseline < mt < ig <= cl
    assert all(head == "aux" for _, head in ig - mt)
    if FLAG_NO_CONTRASTIVE_PAIRS not in flags:
        assert ig < cl


# -----------------------------------------------------------------------------
# Command line
# -----------------------------------------------------------------------------


@pytest.fixture(autouse=True)
def _drop_cli_handlers():
    yield
    root = logging.getLogger()
    for handler in [h for h in root.handlers if getattr(h, "_ignet_pipeline", False)]:
        root.removeHandler(handler)
        handler.close()


def _gen(tmp_path, name, *extra):
    scene = tmp_path / "scene.yaml"
    scene.write_text(SCENE_YAML)
    out = tmp_path / name
    argv = [
        "gen-data", "--out", str(out), "--frames", "2", "--val-frames", "1",
        "--source-frames", "1", "--scribble", "0.1", "--seed", "5", "--scene", str(scene),
    ]
    assert main(argv + list(extra)) == 0
    return out


def test_cli_gen_data_is_reproducible(tmp_path):
    """Test that gen-data with a seed is reproducible"""
    a = _gen(tmp_path, "a")
    b = _gen(tmp_path, "b")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len(files) == 5
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_cli_usage_and_missing_files(tmp_path, capsys):
    """Test the usage and missing-file exit codes"""
    assert main(["no-such-command"]) == 2
    assert main(["eval", "--data", "x"]) == 2
    code = main(["eval", "--ckpt", str(tmp_path / "none.nac"), "--data", str(tmp_path), "--report", "r.txt"])
    assert code == 3
    assert "error[missing-file]" in capsys.readouterr().err


def test_cli_config_and_format_errors(tmp_path, capsys):
    """Test the configuration and format exit codes"""
    data = _gen(tmp_path, "ds")
    out = str(tmp_path / "s.nac")
    assert main(["train-student", "--data", str(data), "--out", out, "--toggles", "mt,ig"]) == 4
    assert "error[config]" in capsys.readouterr().err
    assert main(["train-student", "--data", str(data), "--out", out, "--toggles", "mt,bogus"]) == 4

    (data / "train" / "frame_00000.fdf").write_bytes(b"junk")
    assert main(["train-student", "--data", str(data), "--out", out, "--steps", "0"]) == 6
    assert "error[format]" in capsys.readouterr().err


def test_cli_untrained_student_evaluates(tmp_path, capsys):
    """Test evaluating a zero-step student with report and BEV output"""
    data = _gen(tmp_path, "ds")
    ckpt = tmp_path / "s.nac"
    report = tmp_path / "report.txt"
    bev = tmp_path / "bev.ppm"
    assert main(["train-student", "--data", str(data), "--out", str(ckpt), "--steps", "0"]) == 0
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data), "--report", str(report), "--bev", str(bev)]) == 0
    assert "mIoU" in report.read_text()
    assert (tmp_path / "report.txt.kv").is_file()
    assert bev.read_bytes().startswith(b"P6\n")
    assert "mIoU" in capsys.readouterr().out


def test_cli_guide_then_student(tmp_path):
    """Test guide training, student training and resume from the command line"""
    data = _gen(tmp_path, "ds")
    config = tmp_path / "run.yaml"
    config.write_text("feature_dim: 4\nhidden: 6\nguide_hidden: 6\nlog_every: 1\n")
    guide = tmp_path / "guide.nac"
    ckpt = tmp_path / "s.nac"
    assert main(["train-guide", "--data", str(data), "--out", str(guide), "--config", str(config), "--steps", "2"]) == 0
    argv = [
        "train-student", "--data", str(data), "--out", str(ckpt), "--guide", str(guide),
        "--config", str(config), "--toggles", "mt,ig,cl", "--steps", "2",
    ]
    assert main(argv) == 0
    loaded = load_checkpoint(ckpt)
    assert loaded.step == 2
    assert loaded.guide_path == str(guide)
    assert loaded.config.toggles == {"mt": True, "ig": True, "cl": True, "fovmix": False}
    resume = ["train-student", "--data", str(data), "--out", str(ckpt), "--guide", str(guide),
              "--resume", str(ckpt), "--steps", "3"]
    assert main(resume) == 0
    assert load_checkpoint(ckpt).step == 3


@pytest.mark.slow
def test_cli_guide_mode_comparison(tmp_path):
    """Test the guide mode comparison command"""
    data = _gen(tmp_path, "ds")
    config = tmp_path / "run.yaml"
    config.write_text("feature_dim: 4\nguide_hidden: 6\nguide_steps: 2\nlog_every: 0\n")
    out = tmp_path / "guide_modes.txt"
    assert main(["ablate-guide", "--data", str(data), "--out", str(out), "--seeds", "1", "--config", str(config)]) == 0
    text = out.read_text()
    for mode in ("source-only", "weak-only", "uda", "wda"):
        assert mode in text


def test_shape_and_camera_errors_exit_as_unexpected():
    """Test the exit code of shape and camera errors and its help text"""
    assert classify(ShapeError("bad shape")) == (1, "shape")
    assert classify(CameraError("bad camera")) == (1, "camera")
    assert "shape and camera errors" in build_parser().format_help()


# -----------------------------------------------------------------------------
# Training direction at full toy scale
# -----------------------------------------------------------------------------

CONFIG_DIR = Path(__file__).resolve().parents[1] / "config"


@pytest.fixture(scope="module")
def full_ablation():
    scale_data = generate_dataset(100, 0, scribble_budget=0.08)
    scale_cfg = load_run_config(CONFIG_DIR / "ablation.yaml", log_every=0)
    return run_ablation(scale_cfg, scale_data, seeds=range(5))


@pytest.mark.slow
def test_each_component_improves_miou(full_ablation):
    """Test baseline < mt < mt+ig <= every component, with a clear overall gain"""
    miou = {row.name: row.miou for row in full_ablation.rows}
    assert miou["baseline"] < miou["mt"] < miou["mt+ig"] <= miou["mt+ig+cl+fovmix"]
    assert miou["mt+ig+cl+fovmix"] - miou["baseline"] >= 0.02


@pytest.mark.slow
def test_image_guidance_helps_border_and_far_points(full_ablation):
    """Test that adding image guidance raises border and far-range accuracy"""
    mt = full_ablation.row("mt").split
    mt_ig = full_ablation.row("mt+ig").split
    assert mt_ig["border_acc"] > mt["border_acc"]
    assert mt_ig["far_acc"] > mt["far_acc"]


@pytest.mark.slow
def test_dense_supervision_fits_the_toy_scenes(full_ablation):
    """Test that a densely labeled student with every component off exceeds 0.9 mIoU"""
    assert full_ablation.reference.miou > 0.9
