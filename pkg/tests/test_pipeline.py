import json
import os

import numpy as np
import pytest

from egoego import bodygen, cli, geom3d
from egoego.pipeline import PairedDataset, cmd_datagen, config_from_dict, container, load_config
from egoego.pipeline.config import ConfigError
from egoego.pipeline.data import export_head_input, export_motion
from egoego.pipeline.evaluate import cmd_eval, evaluate, run_pipeline, sequence_seed
from egoego.pipeline.training import checkpoint_path, cmd_train, load_checkpoint, train

TINY_NET = {"d_model": 16, "n_heads": 2, "d_ff": 32, "max_len": 64}


def tiny_config(base_dir, **data):
    cfg = {
        "data": {"n_train": 3, "n_test": 2, "T": 20, **data},
        "models": {"gravity": TINY_NET, "head": TINY_NET, "diffusion": TINY_NET},
        "schedule": {"N": 10, "beta_1": 1e-3, "beta_N": 0.3},
        "train": {t: {"steps": 4, "batch_size": 2, "lr": 1e-3, "log_every": 0} for t in ("gravity", "head", "diffusion")},
        "eval": {"K": 3},
    }
    return config_from_dict(cfg, base_dir=str(base_dir))


def write_config(path, cfg):
    cfg.dump(path)
    return str(path)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Tiny dataset plus all three checkpoints, built once through the CLI."""
    root = tmp_path_factory.mktemp("exp")
    cfg_path = write_config(root / "config.json", tiny_config(root))
    assert cli.main(["datagen", "--config", cfg_path]) == 0
    for target in ("gravity", "head", "diffusion"):
        assert cli.main(["train", "--config", cfg_path, "--target", target]) == 0
    return root, cfg_path


def test_config_round_trip_and_errors(tmp_path):
    cfg = tiny_config(tmp_path)
    path = write_config(tmp_path / "c.json", cfg)
    back = load_config(path)
    assert back.to_dict() == cfg.to_dict() and back.digest() == cfg.digest()
    assert back.base_dir == str(tmp_path)
    with pytest.raises(ConfigError):
        config_from_dict({"data": {"n_trian": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"eval": {"K": 0}})
    with pytest.raises(ConfigError):
        config_from_dict({"data": {"T": 1}})
    assert tiny_config(tmp_path, flow_noise=0.1).digest() != cfg.digest()


def test_datagen_records(workdir):
    root, cfg_path = workdir
    ds = PairedDataset.load(os.path.join(root, "data"))
    assert len(ds) == 5 and ds.motion.shape == (5, 20, 198)
    assert ds.indices("train") == [0, 1, 2] and ds.indices("test") == [3, 4]
    manifest = container.read_manifest(os.path.join(root, "data"))
    assert len(manifest["meta"]["records"]) == 5
    assert manifest["meta"]["config_digest"] == load_config(cfg_path).digest()
    for i in range(5):
        head = bodygen.head_from_motion(ds.motion[i])
        assert np.array_equal(ds.head_cond[i][:, :3], head.positions)
        assert np.array_equal(geom3d.sixd_to_rotmat(ds.head_cond[i][:, 3:]), head.rotations)


def test_datagen_deterministic(tmp_path):
    digests = []
    for name in ("a", "b"):
        ds, path = cmd_datagen(tiny_config(tmp_path / name))
        digests.append(container.container_digest(path))
        blobs = sorted(f for f in os.listdir(path))
        digests.append([open(os.path.join(path, f), "rb").read() for f in blobs])
    assert digests[0] == digests[2] and digests[1] == digests[3]


def test_datagen_test_split_is_disjoint(workdir):
    ds = PairedDataset.load(os.path.join(workdir[0], "data"))
    train_ids = {ds.records[i]["motion_params"]["seed"] for i in ds.indices("train")}
    test_ids = {ds.records[i]["motion_params"]["seed"] for i in ds.indices("test")}
    assert not train_ids & test_ids


def test_container_round_trip_and_errors(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"a": rng.standard_normal((3, 4)).astype(np.float32), "b/c": rng.standard_normal(5), "i": np.arange(4)}
    container.save_container(tmp_path / "x", arrays, {"seed": 1}, kind="test")
    back, meta = container.load_container(tmp_path / "x", kind="test")
    assert meta == {"seed": 1}
    for k, v in arrays.items():
        assert back[k].dtype == v.dtype and np.array_equal(back[k], v)
    with pytest.raises(container.ContainerError):
        container.load_container(tmp_path / "x", kind="dataset")

    blob = tmp_path / "x" / "a.bin"
    raw = bytearray(blob.read_bytes())
    raw[5] ^= 0xFF
    blob.write_bytes(bytes(raw))
    with pytest.raises(container.ChecksumError):
        container.load_container(tmp_path / "x")


def _edit_manifest(path, fn):
    mpath = os.path.join(path, container.MANIFEST)
    with open(mpath) as f:
        m = json.load(f)
    fn(m)
    with open(mpath, "w") as f:
        json.dump(m, f)


def test_container_shape_and_version(tmp_path):
    container.save_container(tmp_path / "s", {"a": np.zeros((3, 4), np.float32)})
    _edit_manifest(tmp_path / "s", lambda m: m["arrays"]["a"].update(shape=[3, 5]))
    with pytest.raises(container.ShapeError):
        container.load_container(tmp_path / "s")
    container.save_container(tmp_path / "v", {"a": np.zeros(3)})
    _edit_manifest(tmp_path / "v", lambda m: m.update(version=container.VERSION + 1))
    with pytest.raises(container.VersionMismatchError):
        container.load_container(tmp_path / "v")
    with pytest.raises(container.ContainerError):
        container.load_container(tmp_path / "missing")


def test_dataset_corruption_detected(workdir, tmp_path):
    ds = PairedDataset.load(os.path.join(workdir[0], "data"))
    ds.save(tmp_path / "d")
    blob = tmp_path / "d" / "motion.bin"
    raw = bytearray(blob.read_bytes())
    raw[100] ^= 1
    blob.write_bytes(bytes(raw))
    with pytest.raises(container.ChecksumError):
        PairedDataset.load(tmp_path / "d")


def test_checkpoint_contents(workdir):
    root, cfg_path = workdir
    cfg = load_config(cfg_path)
    model, meta = load_checkpoint(checkpoint_path(cfg, "diffusion"), "diffusion")
    assert meta["config_digest"] == cfg.digest() and meta["step"] == 4
    assert np.isfinite(meta["final_loss"])
    arrays, _ = container.load_container(checkpoint_path(cfg, "diffusion"))
    assert arrays["curve"].shape == (4,) and "param/x_std" in arrays
    with pytest.raises(container.ContainerError):
        load_checkpoint(checkpoint_path(cfg, "diffusion"), "gravity")


def test_resume_zero_steps_keeps_params(workdir):
    root, cfg_path = workdir
    cfg = load_config(cfg_path)
    before, _ = load_checkpoint(checkpoint_path(cfg, "head"), "head")
    cfg.train.head.resume = True
    cfg.train.head.steps = 0
    ds = PairedDataset.load(cfg.path("dataset"))
    model, opt, curve, meta = train(cfg, ds, "head")
    assert opt.step == 4 and len(curve) == 4
    for (k, a), (_, b) in zip(before.state_dict().items(), model.state_dict().items()):
        assert np.array_equal(a.numpy(), b.numpy()), k


def test_resume_accumulates_steps(workdir, tmp_path):
    root, cfg_path = workdir
    ds = PairedDataset.load(os.path.join(root, "data"))
    cfg = load_config(cfg_path)
    cfg.paths.checkpoints = str(tmp_path / "ck")
    cfg.train.gravity.steps = 3
    cmd_train(cfg, "gravity", ds)
    cfg.train.gravity.resume = True
    cmd_train(cfg, "gravity", ds)
    model, meta = load_checkpoint(checkpoint_path(cfg, "gravity"), "gravity")
    assert meta["step"] == 6
    assert len(container.load_container(checkpoint_path(cfg, "gravity"))[0]["curve"]) == 6


def test_eval_modes_and_determinism(workdir):
    root, cfg_path = workdir
    cfg = load_config(cfg_path)
    for mode in ("slam", "slam+s", "slam+s+g", "full", "gt-head"):
        report, out_dir = cmd_eval(cfg, mode)
        assert set(report.rows) == {"test-0000", "test-0001"}
        assert os.path.exists(os.path.join(out_dir, "report.json")) and os.path.exists(os.path.join(out_dir, "report.txt"))
        assert report.meta["config_digest"] == cfg.digest()
        again, _ = cmd_eval(cfg, mode)
        assert again.to_dict() == report.to_dict()
    gt = json.load(open(os.path.join(root, "reports", "gt-head", "report.json")))
    # R R^T - I only carries rounding from the matrix product
    assert gt["aggregate"]["o_head"] < 1e-12 and gt["aggregate"]["t_head"] == 0


def test_gt_head_never_worse_on_head_metrics(workdir):
    cfg = load_config(workdir[1])
    ds = PairedDataset.load(cfg.path("dataset"))
    full = evaluate(cfg, ds, "full", body=False)
    gt = evaluate(cfg, ds, "gt-head", body=False)
    for k in full.rows:
        assert gt.rows[k]["t_head"] <= full.rows[k]["t_head"] and gt.rows[k]["o_head"] <= full.rows[k]["o_head"]


def test_pipeline_matches_eval(workdir, tmp_path):
    root, cfg_path = workdir
    cfg = load_config(cfg_path)
    ds = PairedDataset.load(cfg.path("dataset"))
    i = ds.indices("test")[1]
    export_head_input(ds, i, tmp_path / "input")
    export_motion(ds.motion[i], tmp_path / "gt")
    seed = sequence_seed(cfg, i)
    samples, est, report, best = run_pipeline(cfg, tmp_path / "input", seed, tmp_path / "gt", tmp_path / "out")
    assert samples.shape == (3, 20, 198)
    assert geom3d.is_rotation(geom3d.sixd_to_rotmat(samples[..., 66:].reshape(3, 20, 22, 6)), tol=1e-5)
    ev = evaluate(cfg, ds, "full", indices=[i])
    rid = ds.records[i]["id"]
    assert report.rows[rid] == ev.rows[rid]
    again = run_pipeline(cfg, tmp_path / "input", seed, tmp_path / "gt")[0]
    assert np.array_equal(again, samples)
    saved, meta = container.load_container(tmp_path / "out" / "motion", kind="motion-samples")
    assert meta["best_index"] == best and saved["samples"].shape == (3, 20, 198)


def test_cli_exit_codes(workdir, tmp_path):
    root, cfg_path = workdir
    bad = tmp_path / "bad.json"
    bad.write_text('{"data": {"bogus": 1}}')
    assert cli.main(["datagen", "--config", str(bad)]) == 3

    empty = write_config(tmp_path / "empty.json", tiny_config(tmp_path))
    assert cli.main(["eval", "--config", empty, "--mode", "full"]) == 4  # no dataset container

    cfg = load_config(cfg_path)
    cfg.paths.checkpoints = str(tmp_path / "none")
    cfg.paths.dataset = os.path.join(root, "data")
    missing = write_config(tmp_path / "missing.json", cfg)
    assert cli.main(["eval", "--config", missing, "--mode", "full"]) == 8

    ds = PairedDataset.load(os.path.join(root, "data"))
    export_head_input(ds, 0, tmp_path / "inp")
    _edit_manifest(tmp_path / "inp", lambda m: m.update(version=99))
    assert cli.main(["pipeline", "--config", cfg_path, "--input", str(tmp_path / "inp"), "--seed", "0"]) == 5


def test_cli_static_input_scale_error(workdir, tmp_path):
    root, cfg_path = workdir
    T = 20
    container.save_container(tmp_path / "static", {
        "slam_pos": np.zeros((T, 3), np.float32),
        "slam_rot6d": np.tile(np.array([1, 0, 0, 0, 1, 0], np.float32), (T, 1)),
        "flow": np.zeros((T, 64), np.float32),
        "first_rotation": np.eye(3),
    }, {"frame_rate": 30.0}, kind="head-input")  # fmt: skip
    code = cli.main(["pipeline", "--config", cfg_path, "--input", str(tmp_path / "static"), "--seed", "0"])
    assert code == 9


def test_cli_pipeline_writes_outputs(workdir, tmp_path, capsys):
    root, cfg_path = workdir
    ds = PairedDataset.load(os.path.join(root, "data"))
    export_head_input(ds, 3, tmp_path / "inp")
    out = tmp_path / "out"
    assert cli.main(["pipeline", "--config", cfg_path, "--input", str(tmp_path / "inp"), "--seed", "5", "--out", str(out)]) == 0
    assert os.path.exists(out / "motion" / "manifest.json") and os.path.exists(out / "summary.json")
    assert "outputs in" in capsys.readouterr().out
