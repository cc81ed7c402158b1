import os
import subprocess

import numpy as np
import pytest

import viewsynth as vs

PYRAMID = "An ancient Egyptian pyramid in the desert."


def pattern(size=64, variant=0):
    u = np.arange(size) / size
    xx, yy = np.meshgrid(u, u)
    img = np.stack(
        [
            0.5 + 0.4 * np.sin(6 * xx + variant),
            0.5 + 0.4 * np.cos(5 * yy - 0.7 * variant),
            0.5 + 0.3 * np.sin(4 * (xx + yy) + 1.3 * variant),
        ],
        axis=-1,
    )
    return np.round(img * 255) / 255


FAST = {
    "image_size": "64",
    "embed_opt_steps_input": "5",
    "lora_steps_input": "5",
    "embed_opt_steps_view": "5",
    "lora_steps_view": "5",
    "sampler_steps": "4",
}


def test_prompt_and_views():
    view = vs.ViewSpec(30, 30)
    assert vs.build_target_prompt(view, PYRAMID) == (
        "View from an elevated angle of +30 degrees and an azimuth angle of +30 degrees, " + PYRAMID
    )
    assert vs.snap_view(vs.ViewSpec(0, 359)) == vs.ViewSpec(-20, 330)
    assert len(vs.default_supported_views()) == 6
    assert [v.label() for v in vs.evaluation_views()] == ["30_30", "-20_210", "30_270", "-20_330"]
    assert vs.ViewSpec(10, 370).azimuth == 10
    with pytest.raises(vs.ValidationError):
        vs.ViewSpec(120, 0)


def test_config_round_trip():
    defaults = vs.config_defaults()
    assert defaults["mi_bins"] == "32"
    assert vs.resolve_config({"views": "30,370"})["views"] == "30,10"
    with pytest.raises(vs.ValidationError):
        vs.resolve_config({"mi_bins": "0"})
    with pytest.raises(vs.ValidationError):
        vs.resolve_config({"no_such_key": "1"})


def test_mutual_information_and_metrics():
    rng = np.random.default_rng(0)
    a = rng.random((64, 64))
    b = rng.random((64, 64))
    assert abs(vs.mutual_information(a, b, 8, 0.02) - vs.mutual_information(b, a, 8, 0.02)) < 1e-9
    assert vs.mutual_information(a, b, 8, 0.02) < 0.05
    assert sum(vs.soft_histogram(a, 8, 0.02)) == pytest.approx(1.0)

    img = pattern()
    m = vs.evaluate_metrics(img, PYRAMID, img, vs.ViewSpec(30, 30))
    assert list(m) == ["LPIPS", "CLIP", "View-CLIP", "CLIPD", "View-CLIPD", "CLIP-I"]
    assert abs(m["LPIPS"]) < 1e-6
    assert m["CLIP-I"] == pytest.approx(1.0, abs=1e-5)
    assert m["CLIPD"] == 0.0 and m["View-CLIPD"] == 0.0
    assert vs.lpips_distance(img, 1.0 - img) > vs.lpips_distance(img, np.clip(img + 0.01, 0, 1))


def test_generate_is_deterministic(tmp_path):
    overrides = dict(FAST, cache_dir=str(tmp_path / "cache"))
    first = vs.generate(pattern(), PYRAMID, vs.ViewSpec(25, 35), overrides)
    second = vs.generate(pattern(), PYRAMID, vs.ViewSpec(25, 35), overrides)
    assert first["image"].shape == (64, 64, 3)
    assert np.array_equal(first["image"], second["image"])
    assert first["realized_view"] == vs.ViewSpec(30, 30)
    assert first["target_prompt"].endswith(", " + PYRAMID)


def test_split():
    ids = [f"s{i:02d}" for i in range(20)]
    val = vs.validation_split(ids, 0.10, 0)
    assert len(val) == 2
    assert val == vs.validation_split(list(reversed(ids)), 0.10, 0)


def write_scene(root, scene_id, variant, caption):
    import cv2

    d = root / scene_id
    d.mkdir(parents=True)
    cv2.imwrite(str(d / "input.png"), (pattern(64, variant)[..., ::-1] * 255).round().astype(np.uint8))
    (d / "caption.txt").write_text(caption + "\n")


def test_cli_in_process_and_executable(tmp_path):
    write_scene(tmp_path / "data", "a", 0, "A red kite.")
    write_scene(tmp_path / "data", "b", 1, "A blue kite.")
    manifest = vs.load_manifest(tmp_path / "data")
    assert [s["scene_id"] for s in manifest] == ["a", "b"]

    flags = []
    for k, v in FAST.items():
        flags += [f"--{k}", v]
    flags += ["--cache_dir", str(tmp_path / "cache"), "--views", "30,30"]
    code, out, err = vs.run_cli(flags + ["batch", str(tmp_path / "data"), "--all", "--out", str(tmp_path / "out")])
    assert code == 0, err
    csv = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert csv[0] == "dataset,view,method,scene,LPIPS,CLIP,View-CLIP,CLIPD,View-CLIPD,CLIP-I"
    assert len(csv) == 4

    code, _, err = vs.run_cli(["generate", "--image", str(tmp_path / "nope.png"), "--elevation", "0", "--azimuth", "0"])
    assert code == 2 and err.count("\n") == 1

    exe = os.environ.get("VIEWSYNTH_CLI")
    if exe:
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        for key in vs.config_defaults():
            assert f"--{key}" in proc.stdout
