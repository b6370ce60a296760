"""Acceptance criteria, one test each; the run ends with a per-criterion PASS/FAIL summary."""

import json
import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import DATA, DESK, photo
from das import cli, tasks
from das.augment import crop, scatter_adjoint
from das.diagnostics import ablation_report, power_law_field, power_spectrum, psnr
from das.encoders import Target, TargetSet, ToyEncoder, weighted_objective
from das.optimizer import EncoderObjective, RunConfig, ascent_direction, das_optimize, mean_view_objective, pixel_ascent
from das.pyramid import new_pyramid, resize_adjoint, resize_bilinear
from das.rng import root_stream
from das.tasks import TargetSource

CLIP_CHECKPOINT = "clip-vit-base-patch32"


def _clip_checkpoint():
    root = os.environ.get("DAS_WEIGHTS_DIR")
    if not root or not (Path(root) / CLIP_CHECKPOINT / "config.json").is_file():
        return None
    return Path(root) / CLIP_CHECKPOINT


@pytest.mark.criterion(1, "spectrum estimator calibrated (CLIP generation slope in [-2.6, -1.4] when weights exist)")
def test_criterion_1_spectrum(record_property):
    t0 = time.perf_counter()
    for alpha in (0.0, 1.0, 2.0):
        for seed in range(5):
            slope = power_spectrum(power_law_field(224, alpha, seed)).slope
            assert abs(slope + alpha) <= 0.3, (alpha, seed, slope)
    assert time.perf_counter() - t0 < 30.0

    checkpoint = _clip_checkpoint()
    if checkpoint is None:
        # the synthetic calibration is the whole criterion without weights
        record_property("note", f"synthetic only: no {CLIP_CHECKPOINT} under $DAS_WEIGHTS_DIR")
        return
    from das.clip_backend import ClipModelSpec, load_clip

    enc = load_clip(ClipModelSpec(str(checkpoint)))
    trace = tasks.generate([enc], [TargetSource.text("a photo of a misty mountain landscape")], RunConfig())
    slope = power_spectrum(trace.image).slope
    record_property("note", f"CLIP generation slope {slope:.2f}")
    assert -2.6 <= slope <= -1.4


@pytest.mark.criterion(2, "reconstruct reports 294:1 for 224x224x3 -> 512")
def test_criterion_2_compression(tmp_path, capsys):
    assert tasks.compression_ratio(224, 512) == 294.0
    assert cli.main(["reconstruct", "--image", str(DATA / "camera.png"), "--steps", "0", "--out", str(tmp_path)]) == 0
    assert "compression 294:1" in capsys.readouterr().out
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["reconstruction"]["compression_ratio"] == "294:1"


def _rel_err(fd, an):
    fd, an = np.asarray(fd), np.asarray(an)
    return np.linalg.norm(fd - an) / np.linalg.norm(an)


@pytest.mark.criterion(3, "finite differences <= 1e-3 for encoders and the full chain; adjoint dot tests <= 1e-6")
def test_criterion_3_gradients():
    t0 = time.perf_counter()
    r = np.random.default_rng(0)
    targets = TargetSet([Target(r.normal(size=512), 1.0), Target(r.normal(size=512), -0.3)])

    # encoders (toy at several input sizes; the CLIP adapter is checked at single precision elsewhere)
    for size in (8, 16, 32, 224):
        enc = ToyEncoder(input_size=size)
        img = r.uniform(size=(size, size, 3))
        _, grad = enc.objective_and_grad(img[None], targets)
        h, fd, an = 1e-5, [], []
        for _ in range(20):
            c = tuple(r.integers(0, n) for n in img.shape)
            plus, minus = img.copy(), img.copy()
            plus[c] += h
            minus[c] -= h
            f = lambda x: weighted_objective(enc.forward(x[None])[0][0], targets)
            fd.append((f(plus) - f(minus)) / (2 * h))
            an.append(grad[0][c])
        assert _rel_err(fd, an) <= 1e-3, f"toy encoder at {size}"

    # pyramid + augmentation + encoder on a 16px canvas, every parameter
    cfg = RunConfig(steps=1, resolutions=(1, 2, 4, 8, 16), shift_max=4, noise_std=0.1, batch=3, out_size=8)
    objective = EncoderObjective([ToyEncoder(input_size=8)], [targets])
    p = new_pyramid(cfg.pyramid_resolutions, 16, sigma=0.3, seed=1)
    rng = root_stream(5).child("augment", 0)
    grads, _ = ascent_direction(p, cfg, objective, rng)
    h, fd, an = 1e-4, [], []
    for k, comp in enumerate(p.components):
        for idx in np.ndindex(comp.shape):
            plus, minus = p.copy(), p.copy()
            plus.components[k][idx] += h
            minus.components[k][idx] -= h
            fd.append((mean_view_objective(plus, cfg, objective, rng) - mean_view_objective(minus, cfg, objective, rng))
                      / (2 * h))
            an.append(grads[k][idx])
    assert _rel_err(fd, an) <= 1e-3, "full chain"

    # adjoint dot tests
    for n_in in (1, 2, 3, 7, 8, 16):
        for n_out in (1, 4, 16, 224):
            x, y = r.normal(size=(n_in, n_in, 3)), r.normal(size=(n_out, n_out, 3))
            lhs = np.sum(resize_bilinear(x, n_out) * y)
            rhs = np.sum(x * resize_adjoint(y, n_in))
            assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), 1e-12), ("resize", n_in, n_out)
    shifts = [(0, 0), (-4, 4), (3, -1), (4, 4)]
    x = r.normal(size=(16, 16, 3))
    ys = [r.normal(size=(8, 8, 3)) for _ in shifts]
    lhs = sum(np.sum(crop(x, 8, s) * y) for s, y in zip(shifts, ys)) / len(shifts)
    rhs = np.sum(x * scatter_adjoint(list(zip(ys, shifts)), 16))
    assert abs(lhs - rhs) <= 1e-6 * abs(lhs), "crop"
    assert time.perf_counter() - t0 < 60.0


@pytest.mark.criterion(4, "desk-scale toy inversion reaches cosine >= 0.95 within 200 steps, under 2 min")
def test_criterion_4_inversion(toy32):
    cfg = RunConfig(**DESK)
    assert cfg.canvas_size == 48 and cfg.batch == 8 and cfg.shift_max == 8 and cfg.steps == 200
    t0 = time.perf_counter()
    _, report = tasks.reconstruct([toy32], photo("camera", 32), cfg)
    elapsed = time.perf_counter() - t0
    assert report.cosines["toy"] >= 0.95
    assert elapsed < 120.0


@pytest.mark.criterion(5, "DAS slope <= pixel-ascent slope - 0.5 with both at cosine >= 0.9")
def test_criterion_5_ablation(toy32):
    objective = EncoderObjective([toy32], [TargetSet.single(toy32.embed(photo("camera", 32)))])
    rows = {r.name: r for r in ablation_report(RunConfig(**DESK), objective, columns=("pixel", "das"))}
    assert rows["das"].final_objective >= 0.9 and rows["pixel"].final_objective >= 0.9
    assert rows["das"].slope <= rows["pixel"].slope - 0.5


@pytest.mark.criterion(6, "DAS with a single full-resolution component is bit-identical to pixel ascent")
def test_criterion_6_degenerate_equivalence(toy32):
    cfg = replace(RunConfig(**DESK), steps=20, resolutions=(48,))
    objective = EncoderObjective([toy32], [TargetSet.single(toy32.embed(photo("rocket", 32)))])
    a, b = das_optimize(cfg, objective), pixel_ascent(cfg, objective)
    np.testing.assert_array_equal(a.canvas, b.canvas)
    np.testing.assert_array_equal(a.objectives, b.objectives)


@pytest.mark.criterion(7, "inpainting keeps the frozen region bit-identical; zero-step modify >= 40 dB")
def test_criterion_7_preservation(toy32):
    cfg = replace(RunConfig(**DESK), steps=30)
    source = photo("camera", 32)
    mask = np.zeros((32, 32))
    mask[:, 16:] = 1.0
    trace = tasks.inpaint([toy32], source, mask, [TargetSource.image(photo("rocket", 32))], cfg)
    assert np.max(np.abs(trace.image - source)[mask == 0]) == 0.0
    for name in ("astronaut", "camera", "coffee", "chelsea", "rocket"):
        src = photo(name, 32)
        start = tasks.modify([toy32], src, [TargetSource.image(photo("rocket", 32))], replace(cfg, steps=0))
        assert psnr(start.image, src) >= 40.0


def _artifacts(out: Path) -> dict:
    files = {}
    for path in sorted(out.iterdir()):
        if path.name == "manifest.json":
            m = json.loads(path.read_text())
            m.pop("wall_clock_s", None)
            m.pop("runtime_s", None)
            m.pop("argv")
            files[path.name] = m
        else:
            files[path.name] = path.read_bytes()
    return files


@pytest.mark.criterion(8, "fixed-seed subcommands produce byte-identical artifacts across invocations")
def test_criterion_8_determinism(tmp_path):
    camera, rocket = str(DATA / "camera.png"), str(DATA / "rocket.png")
    mask = tmp_path / "mask.png"
    from das.imageio import write_png

    half = np.zeros((32, 32, 3))
    half[:, 16:] = 1.0
    write_png(mask, half)
    fast = ["--steps", "5", "--out-size", "32", "--shift-max", "8", "--batch", "4", "--noise-std", "0.03", "--seed", "7"]
    commands = [
        ["generate", "--target-image", rocket, "--spectrum", "--save-canvas"],
        ["reconstruct", "--image", camera],
        ["modify", "--image", camera, "--target-image", rocket],
        ["style", "--content", camera, "--style", rocket],
        ["gram-style", "--content", camera, "--style", rocket, "--lr", "0.003", "--content-weight", "0.001"],
        ["inpaint", "--image", camera, "--mask", str(mask), "--target-image", rocket],
        ["ablate", "--target-image", rocket],
    ]
    for argv in commands:
        runs = []
        for k in range(2):
            out = tmp_path / f"{argv[0]}-{k}"
            assert cli.main(argv + fast + ["--out", str(out)]) == 0
            runs.append(_artifacts(out))
        assert runs[0] == runs[1], argv[0]

    spectrum_out = []
    for k in range(2):
        target = tmp_path / f"bins{k}.csv"
        assert cli.main(["spectrum", camera, "--csv", str(target)]) == 0
        spectrum_out.append(target.read_bytes())
    assert spectrum_out[0] == spectrum_out[1]
    embeds = []
    for k in range(2):
        target = tmp_path / f"u{k}.json"
        assert cli.main(["embed", "--image", camera, "--out-size", "32", "--output", str(target)]) == 0
        embeds.append(target.read_bytes())
    assert embeds[0] == embeds[1]
