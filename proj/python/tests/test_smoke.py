import json

import numpy as np
import pytest

import vecdraw


def small_scene(seed=1, n=3, size=32):
    return vecdraw.init_scene(n, vecdraw.CanvasConfig(size, size), seed)


def test_render_shape_and_range():
    img = vecdraw.render(small_scene())
    assert img.shape == (32, 32, 3)
    assert img.dtype == np.float64
    assert 0.0 <= img.min() and img.max() <= 1.0


def test_empty_scene_is_background():
    scene = vecdraw.Scene([], vecdraw.CanvasConfig(16, 16, (0.2, 0.4, 0.6)))
    img = vecdraw.render(scene)
    assert np.array_equal(img, np.broadcast_to([0.2, 0.4, 0.6], (16, 16, 3)))


def test_params_round_trip():
    scene = small_scene()
    params = vecdraw.scene_to_params(scene)
    assert vecdraw.params_to_scene(params, scene) == scene
    with pytest.raises(vecdraw.ContractError):
        vecdraw.params_to_scene(params[:-1], scene)


def test_pullback_matches_a_finite_difference():
    scene = vecdraw.Scene(
        [vecdraw.Stroke([(0.2, 0.3), (0.5, 0.8), (0.8, 0.4)], 3.0, (0.9, 0.1, 0.2, 0.8))],
        vecdraw.CanvasConfig(32, 32),
    )
    rng = np.random.default_rng(0)
    probe = rng.uniform(-1, 1, size=(32, 32, 3))
    grad = vecdraw.render_pullback(scene, probe)
    params = vecdraw.scene_to_params(scene)
    assert grad.shape == params.shape

    def loss(p):
        return float(np.sum(vecdraw.render(vecdraw.params_to_scene(p, scene)) * probe))

    i = int(np.argmax(np.abs(grad[:6])))
    h = 1e-4
    up, down = params.copy(), params.copy()
    up[i] += h
    down[i] -= h
    fd = (loss(up) - loss(down)) / (2 * h)
    assert abs(fd - grad[i]) < 1e-2 * abs(fd)


def test_bad_image_shape_raises():
    with pytest.raises(vecdraw.ContractError):
        vecdraw.render_pullback(small_scene(), np.zeros((32, 32)))


def test_mock_backend_embeddings():
    backend = vecdraw.MockBackend(3)
    text = backend.encode_text(["a cat", "a dog"])
    assert text.shape == (2, vecdraw.EMBEDDING_DIM)
    assert np.allclose(np.linalg.norm(text, axis=1), 1.0)
    img = backend.encode_images([vecdraw.render(small_scene())])
    assert img.shape == (1, vecdraw.EMBEDDING_DIM)


def test_negative_prompt_composition():
    backend = vecdraw.MockBackend(4)
    rng = np.random.default_rng(1)
    batch = [rng.uniform(size=(32, 32, 3)) for _ in range(2)]
    loss, grads = backend.score_images(batch, ["a tree"], ["snow"], 0.3)
    assert len(grads) == 2 and grads[0].shape == (32, 32, 3)
    e = backend.encode_images(batch)
    t = backend.encode_text(["a tree", "snow"])
    cos = lambda a, b: a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    expected = sum(-cos(x, t[0]) + 0.3 * cos(x, t[1]) for x in e)
    assert abs(loss - expected) < 1e-6


def test_synthesis_is_deterministic():
    kwargs = dict(prompts=["a boat"], strokes=8, iterations=5, canvas=32, augments=2,
                  augment_size=32, seed=9)
    a = vecdraw.synthesize(vecdraw.MockBackend(2), **kwargs)
    b = vecdraw.synthesize(vecdraw.MockBackend(2), **kwargs)
    assert a["ok"] and a["outcome"] == "completed"
    assert len(a["loss"]) == 5
    assert a["loss"] == b["loss"]
    assert np.array_equal(a["final_image"], b["final_image"])
    assert a["parameter_count"] == len(vecdraw.scene_to_params(a["final_scene"]))


def test_pixel_mode_parameter_count():
    out = vecdraw.synthesize(vecdraw.MockBackend(2), ["a boat"], iterations=2, canvas=32,
                             augment=False, augments=1, mode="pixels")
    assert out["parameter_count"] == 32 * 32 * 3


def test_invalid_config_raises():
    with pytest.raises(vecdraw.ConfigError):
        vecdraw.synthesize(vecdraw.MockBackend(), ["x"], strokes=0, canvas=32)
    with pytest.raises(vecdraw.ConfigError):
        vecdraw.synthesize(vecdraw.MockBackend(), ["x"], mode="voxels")


def test_reconstruct_lowers_the_error():
    target = vecdraw.render(small_scene(seed=5, n=12))
    out = vecdraw.reconstruct(target, strokes=12, iterations=60, seed=1)
    assert out["ok"]
    assert out["loss"][-1] < out["loss"][0]


def test_svg_round_trip():
    scene = vecdraw.Scene(
        [vecdraw.Stroke([(0.1, 0.2), (0.5, 0.9), (0.9, 0.25)], 2.0, (0.5, 0.25, 0.0, 0.6))],
        vecdraw.CanvasConfig(40, 40),
    )
    svg = vecdraw.export_svg(scene)
    assert svg.lstrip().startswith("<")
    back = vecdraw.parse_svg(svg)
    assert len(back.strokes) == 1
    assert np.allclose(back.strokes[0].control_points, scene.strokes[0].control_points, atol=1e-6)


def test_mock_server_answers_frames():
    server = vecdraw.MockServer(seed=6)
    info = json.loads(server.handle(json.dumps({"op": "info", "id": 1})))
    assert info["id"] == 1
    assert info["payload"]["dim"] == vecdraw.EMBEDDING_DIM
    assert info["payload"]["model"] == vecdraw.MockBackend(6).model_id
    err = json.loads(server.handle("not json"))
    assert err["op"] == "error"


def test_unreachable_service_raises():
    with pytest.raises(vecdraw.TransportError):
        vecdraw.connect("127.0.0.1:1", 1.0)
