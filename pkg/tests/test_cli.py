import hashlib

import numpy as np
import pytest

from moveseg import imgcore
from moveseg.cli import main, overlay
from moveseg.config import DEFAULTS, ConfigError, format_config, load_config, parse_config_text

FAST = "synth.count = 2\nsynth.frames = 6\nprune.min_fg_fraction = 0.05\nsuperpixel.regions = 60\ntrain.epochs = 2\n"


def write_cfg(tmp_path, text=FAST, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def tree_digest(root):
    h = hashlib.sha256()
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(f.relative_to(root)).encode())
        h.update(f.read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------- config

def test_defaults_round_trip(capsys):
    assert main(["defaults"]) == 0
    text = capsys.readouterr().out
    assert parse_config_text(text) == DEFAULTS
    assert format_config(DEFAULTS) == text


def test_unknown_key_is_named(tmp_path, capsys):
    assert main(["train", "--config", write_cfg(tmp_path, "train.learning_rat = 1\n"),
                 "--in", str(tmp_path), "--out", str(tmp_path)]) == 1
    assert "train.learning_rat" in capsys.readouterr().err


def test_trimap_invariant_names_keys(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "trimap.neg_threshold = 0.7\ntrimap.pos_threshold = 0.7\n")
    assert main(["dataset", "--config", cfg, "--in", str(tmp_path), "--out", str(tmp_path)]) == 1
    assert "trimap.pos_threshold" in capsys.readouterr().err


def test_bad_value_type(tmp_path, capsys):
    assert main(["synth", "--config", write_cfg(tmp_path, "train.epochs = many\n"),
                 "--out", str(tmp_path)]) == 1
    assert "train.epochs" in capsys.readouterr().err


@pytest.mark.parametrize("text,key", [
    ("dataset.source = coco\n", "dataset.source"),
    ("overlay.color = 1,2\n", "overlay.color"),
    ("train.layers = conv:8 pool\n", "train.layers"),
    ("graph.damping = 2\n", "graph.damping"),
    ("workers = 0\n", "workers"),
])
def test_invalid_sections(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        load_config(None, parse_config_text(text))


def test_missing_input_is_io_error(tmp_path, capsys):
    assert main(["segment", "--in", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2
    assert "nope" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["synth", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path)]) == 2


def test_seed_flag_overrides(tmp_path):
    cfg = load_config(write_cfg(tmp_path, "seed = 3\n"), {"seed": 9})
    assert cfg["seed"] == 9 and cfg.dataset.seed == 9 and cfg.train.rng_seed == 9


# ---------------------------------------------------------------- overlay

def test_overlay_empty_full_and_one_pixel():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
    empty = np.zeros((5, 7), bool)
    assert np.array_equal(overlay(img, empty), img)
    full = overlay(img, ~empty, (255, 0, 0))
    expect = np.floor(0.5 * img + 0.5 * np.array([255, 0, 0]) + 0.5).astype(np.uint8)
    assert np.array_equal(full, expect)
    one = np.zeros((1, 1, 3), np.uint8) + np.array([10, 20, 31], np.uint8)
    # 0.5*10 + 127.5 = 132.5 -> 133, 0.5*20 = 10, 0.5*31 = 15.5 -> 16
    assert overlay(one, np.ones((1, 1), bool))[0, 0].tolist() == [133, 10, 16]


def test_overlay_mismatch():
    with pytest.raises(imgcore.DimensionError):
        overlay(np.zeros((4, 4, 3), np.uint8), np.zeros((4, 5), bool))


def test_overlay_command(tmp_path):
    img = np.full((6, 6, 3), 100, np.uint8)
    mask = np.zeros((6, 6), bool)
    mask[:3] = True
    imgcore.write_pnm(tmp_path / "a.ppm", img)
    imgcore.write_mask(tmp_path / "m.pgm", mask)
    out = tmp_path / "o.ppm"
    assert main(["overlay", "--in", str(tmp_path / "a.ppm"), "--mask", str(tmp_path / "m.pgm"),
                 "--out", str(out)]) == 0
    res = imgcore.read_pnm(out)
    assert res[0, 0].tolist() == [178, 50, 50] and res[5, 5].tolist() == [100, 100, 100]
    imgcore.write_mask(tmp_path / "small.pgm", mask[:5])
    assert main(["overlay", "--in", str(tmp_path / "a.ppm"), "--mask", str(tmp_path / "small.pgm"),
                 "--out", str(out)]) == 1


# ---------------------------------------------------------------- prune and pipeline

def test_prune_too_much_fg(tmp_path):
    prob = np.zeros((20, 20))
    prob[1:18, 0:20] = 0.9      # 85% foreground
    imgcore.write_prob(tmp_path / "f.pgm", prob)
    assert main(["prune", "--in", str(tmp_path / "f.pgm"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "prune.txt").read_text() == "f discard too_much_fg\n"


def test_synth_and_segment_fixture(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["synth", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    videos = sorted(p.name for p in (tmp_path / "v").iterdir())
    assert videos == ["square000", "square001"]
    assert len(list((tmp_path / "v" / "square000" / "frames").glob("*.ppm"))) == 6
    assert main(["segment", "--config", cfg, "--in", str(tmp_path / "v"), "--out", str(tmp_path / "s")]) == 0
    manifest = (tmp_path / "s" / "square000" / "manifest.txt").read_text().splitlines()
    assert len(manifest) == 6 and manifest[0] == "square000_00000.pgm\tsquare000\t0"
    assert (tmp_path / "s" / "shots.tsv").read_text() == "square000\t0\t0\t5\nsquare001\t0\t0\t5\n"


def run_pipeline(root, cfg, workers=1):
    w = ["--workers", str(workers)]
    steps = [["synth", "--out", root / "v"],
             ["segment", "--in", root / "v", "--out", root / "s"] + w,
             ["prune", "--in", root / "s", "--out", root / "s"],
             ["dataset", "--in", root / "v", "--segments", root / "s", "--out", root / "d"],
             ["train", "--in", root / "d", "--out", root / "m"],
             ["eval", "--in", root / "d", "--out", root / "m"]]
    for step in steps:
        assert main([str(a) for a in step] + ["--config", cfg]) == 0, step[0]


def test_pipeline_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path)
    run_pipeline(tmp_path / "a", cfg)
    run_pipeline(tmp_path / "b", cfg, workers=2)
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "d" / "manifest.tsv").read_text()
    for sub in ("v", "s", "d", "m"):
        assert tree_digest(a / sub) == tree_digest(b / sub), sub
    header = (a / "m" / "scores.tsv").read_text().splitlines()[0]
    assert header.startswith("item\tnet_iou") and "labels_iou" in header


def test_dataset_from_gt_and_degrade(tmp_path):
    cfg = write_cfg(tmp_path, FAST + "dataset.source = gt\n")
    assert main(["synth", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    assert main(["dataset", "--config", cfg, "--in", str(tmp_path / "v"), "--out", str(tmp_path / "d")]) == 0
    rows = (tmp_path / "d" / "manifest.tsv").read_text().splitlines()
    assert len(rows) == 12       # short shots keep every frame: 6 frames x 2 videos
    dcfg = write_cfg(tmp_path, "degrade.mode = truncate\n", "d.cfg")
    gt_dir = tmp_path / "v" / "square000" / "gt"
    assert main(["degrade", "--config", dcfg, "--in", str(gt_dir), "--out", str(tmp_path / "g")]) == 0
    for f in gt_dir.glob("*.pgm"):
        clean, dirty = imgcore.read_mask(f), imgcore.read_mask(tmp_path / "g" / f.name)
        assert not (dirty & ~clean).any() and dirty.sum() < clean.sum()


def test_train_on_empty_dataset(tmp_path):
    d = tmp_path / "d"
    d.mkdir()
    (d / "manifest.tsv").write_text("")
    assert main(["train", "--in", str(d), "--out", str(tmp_path / "m")]) == 1
