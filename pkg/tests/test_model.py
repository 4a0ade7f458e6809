import json

import numpy as np
import pytest

from sosbound.model import (
    Box,
    ModelFormatError,
    NetworkModel,
    PolytopeSpec,
    forward,
    forward_batch,
    forward_trace,
    gaussian_stream,
    load_model,
    model_fingerprint,
    random_model,
    save_model,
)
from conftest import chain_net


def test_identity_net_shapes(identity_relu):
    m = identity_relu
    assert m.depth == 1 and m.n_u == 1 and m.n_y == 1
    assert m.n_vars == 2
    assert m.layer_vars(0) == (0,) and m.layer_vars(1) == (1,)


def test_forward_identity(identity_relu):
    assert forward(identity_relu, [0.5]) == pytest.approx([0.5])
    assert forward(identity_relu, [-0.5]) == pytest.approx([0.0])


def test_forward_dimension_mismatch(identity_relu):
    with pytest.raises(ValueError):
        forward(identity_relu, [0.1, 0.2])


def _reference_forward(model, u):
    # Independent scalar-loop evaluator; no numpy linear algebra.
    import math

    acts = {
        "relu": lambda t: max(t, 0.0),
        "sigmoid": lambda t: 1.0 / (1.0 + math.exp(-t)),
        "tanh": math.tanh,
    }
    act = acts[model.activation]
    x = list(map(float, u))
    for li, (W, b) in enumerate(model.layers):
        nxt = []
        for r in range(W.shape[0]):
            s = float(b[r])
            for c in range(W.shape[1]):
                s += float(W[r, c]) * x[c]
            nxt.append(s if li == len(model.layers) - 1 else act(s))
        x = nxt
    return np.array(x)


@pytest.mark.parametrize("activation", ["relu", "sigmoid", "tanh"])
def test_forward_matches_independent_evaluator(activation):
    model = random_model(2, 2, 3, 3, activation, seed=7)
    for u in (np.zeros(2), np.array([0.3, -1.1]), np.array([2.0, 0.7])):
        assert forward(model, u) == pytest.approx(_reference_forward(model, u), abs=1e-12)


def test_forward_batch_matches_single():
    model = random_model(2, 3, 2, 4, "tanh", seed=9)
    U = np.random.default_rng(0).normal(size=(17, 2))
    batch = forward_batch(model, U)
    for k in range(17):
        assert batch[k] == pytest.approx(forward(model, U[k]), abs=1e-12)


def test_forward_trace_layout():
    model = random_model(2, 1, 2, 3, "relu", seed=4)
    u = np.array([0.5, -0.25])
    tr = forward_trace(model, u)
    assert tr.shape == (model.n_vars,)
    assert tr[:2] == pytest.approx(u)
    W, b = model.layers[-1]
    assert W @ tr[-3:] + b == pytest.approx(forward(model, u))


def test_relu_piecewise_affine_scaling():
    # Inside one linear region, doubling then halving weights is exact.
    model = chain_net([2.0, 1.0], [1.0, 0.0], "relu")
    u = np.array([0.5])  # pre-activation 2.0 > 0: linear region
    doubled = NetworkModel(
        ((2.0 * model.layers[0][0], 2.0 * model.layers[0][1]), model.layers[1]),
        "relu",
    )
    assert 0.5 * forward(doubled, u)[0] == pytest.approx(forward(model, u)[0], abs=1e-12)


def test_random_model_deterministic():
    a = random_model(1, 1, 2, 2, "relu", seed=7)
    b = random_model(1, 1, 2, 2, "relu", seed=7)
    for (Wa, ba), (Wb, bb) in zip(a.layers, b.layers):
        assert np.array_equal(Wa, Wb) and np.array_equal(ba, bb)
    c = random_model(1, 1, 2, 2, "relu", seed=8)
    assert not np.array_equal(a.layers[0][0], c.layers[0][0])


def test_random_model_counts():
    model = random_model(2, 2, 8, 8, "relu", seed=1)
    assert model.depth == 8
    assert sum(model.layer_size(i) for i in range(1, 9)) == 64
    assert model.n_vars == 2 + 64


def test_random_model_rejects_zero_counts():
    with pytest.raises(ValueError):
        random_model(0, 1, 1, 1, "relu", seed=1)


def test_gaussian_stream_reproducible_and_normal_ish():
    a = gaussian_stream(123, 1000)
    b = gaussian_stream(123, 1000)
    assert np.array_equal(a, b)
    assert abs(a.mean()) < 0.15
    assert 0.85 < a.std() < 1.15


def test_save_load_round_trip_bit_exact(tmp_path, identity_relu):
    model = random_model(2, 2, 3, 4, "sigmoid", seed=11)
    path = tmp_path / "m.json"
    save_model(model, str(path))
    loaded = load_model(str(path))
    assert loaded.activation == model.activation
    for (Wa, ba), (Wb, bb) in zip(model.layers, loaded.layers):
        assert np.array_equal(Wa, Wb) and np.array_equal(ba, bb)
    assert model_fingerprint(loaded) == model_fingerprint(model)


def test_load_identity_file(tmp_path):
    data = {
        "activation": "relu",
        "layers": [{"W": [[1.0]], "b": [0.0]}, {"W": [[1.0]], "b": [0.0]}],
    }
    path = tmp_path / "id.json"
    path.write_text(json.dumps(data))
    model = load_model(str(path))
    assert model.depth == 1 and model.n_vars == 2
    assert forward(model, [0.25]) == pytest.approx([0.25])


def test_load_shape_mismatch_names_layer(tmp_path):
    data = {
        "activation": "relu",
        "layers": [
            {"W": [[1.0, 2.0], [0.0, 1.0]], "b": [0.0, 0.0]},
            {"W": [[1.0, 0.0, 3.0]], "b": [0.0]},
        ],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ModelFormatError, match="layer 1"):
        load_model(str(path))


def test_load_unknown_activation(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"activation": "gelu", "layers": [{"W": [[1.0]], "b": [0.0]}]}))
    with pytest.raises(ModelFormatError, match="activation"):
        load_model(str(path))


def test_load_parse_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ModelFormatError, match="parse"):
        load_model(str(path))


def test_box_validation():
    with pytest.raises(ValueError):
        Box(np.array([0.0, 1.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        Box(np.array([2.0]), np.array([1.0]))


def test_polytope_validation():
    with pytest.raises(ValueError):
        PolytopeSpec(())
    with pytest.raises(ValueError):
        PolytopeSpec(((np.zeros(2), None),))
    spec = PolytopeSpec.axis_faces(2)
    assert len(spec.faces) == 4
