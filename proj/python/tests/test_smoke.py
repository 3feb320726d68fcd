import json

import numpy as np
import pytest

import pcreid


def stick_figure(height=1.7, n=400, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.0, height, n)
    r = 0.12 * np.ones(n)
    a = rng.uniform(0, 2 * np.pi, n)
    return np.stack([r * np.cos(a), r * np.sin(a), z], axis=1)


def test_render_shape_and_background():
    img = pcreid.render_views([stick_figure(), stick_figure(seed=1)], views=4, image_size=32)
    assert img.shape == (4, 2, 32, 32, 3)
    assert img.dtype == np.uint8
    lit = img.any(axis=-1)
    assert 0 < lit.sum() < lit.size


def test_embed_is_frame_order_invariant():
    model = pcreid.Model.init({"base_channels": 4, "part_count": 2, "embed_dim": 8, "image_size": 32}, seed=3)
    frames = [stick_figure(seed=s) for s in range(3)]
    a = pcreid.embed(model, frames)
    b = pcreid.embed(model, frames[::-1])
    assert a.shape == (4, 2, 8)
    np.testing.assert_array_equal(a, b)


def test_assignment_forbidden_entries():
    out = pcreid.solve_assignment(np.array([[np.inf, 5.0], [1.0, 2.0]]))
    assert out["pairs"] == [(0, 1), (1, 0)]
    assert out["cost"] == 6.0


def test_imprint_counts_once_per_frame():
    spot = np.array([[1.0, 1.0, 0.5], [1.001, 1.001, 1.0]])
    counts, grid = pcreid.accumulate_imprint([spot] * 5)
    assert counts.max() == 5.0
    assert counts.sum() == 5.0
    assert grid["cell"] == 0.05


def test_cli_round_trip(tmp_path):
    run = tmp_path / "run"
    args = ["--run-dir", str(run), "synth", "--identities", "2", "--sequences", "3", "--gallery-n", "1", "--probes", "1"]
    assert pcreid.main(args) == 0
    summary = json.loads((run / "summary.json").read_text())
    assert summary["sequences"] == 6
    assert pcreid.main(["synth", "--bogus"]) == 2


def test_errors_surface_as_exceptions(tmp_path):
    with pytest.raises(RuntimeError):
        pcreid.render_views([np.zeros((0, 3))])
    with pytest.raises(RuntimeError):
        pcreid.generate_dataset(tmp_path, {"identities": 0})
