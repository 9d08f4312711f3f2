import numpy as np
import pytest

from encyst import autodiff as ad
from encyst.autodiff import Graph, ShapeError, parameter, placeholder


def numeric_grad(graph, param, h=1e-3):
    """Central finite differences of the graph's scalar output w.r.t. param."""
    base = param.data.copy()
    out = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        param.data = base.copy()
        param.data[i] = base[i] + h
        fp = float(graph.forward())
        param.data = base.copy()
        param.data[i] = base[i] - h
        fm = float(graph.forward())
        out[i] = (fp - fm) / (2 * h)
        it.iternext()
    param.data = base
    graph.forward()
    return out


def check_grads(graph, params, rtol=1e-3, h=1e-2):
    # h balances truncation against float32 rounding in the oracle
    graph.forward()
    graph.backward()
    analytic = [p.grad.copy() for p in params]
    for p, a in zip(params, analytic):
        n = numeric_grad(graph, p, h=h)
        scale = np.maximum(np.abs(n), 1.0)
        assert np.max(np.abs(a - n) / scale) < rtol, f"grad mismatch on {p.name}"


def test_relu_definition():
    x = parameter(np.array([-1.0, 0.0, 2.0]))
    assert np.allclose(Graph(ad.relu(x)).forward(), [0.0, 0.0, 2.0])


def test_softmax_symmetry():
    x = parameter(np.array([0.0, 0.0]))
    assert np.allclose(Graph(ad.softmax(x)).forward(), [0.5, 0.5])


def test_conv_all_ones():
    x = parameter(np.ones((1, 1, 5, 5)))
    w = parameter(np.ones((1, 1, 3, 3)))
    out = Graph(ad.conv2d(x, w)).forward()
    assert out.shape == (1, 1, 3, 3)
    assert np.allclose(out, 9.0)


def test_square_grad():
    x = parameter(np.array([3.0]))
    g = Graph(ad.square(x))
    g.forward()
    g.backward()
    assert np.allclose(x.grad, [6.0])


def test_stop_gradient_blocks():
    x = parameter(np.array([2.0]))
    y = parameter(np.array([5.0]))
    g = Graph(ad.tsum(ad.stop_gradient(x) * y))
    out = g.forward()
    assert np.allclose(out, 10.0)  # forward unchanged
    g.backward()
    assert x.grad is None
    assert np.allclose(y.grad, [2.0])


def test_backward_requires_scalar():
    x = parameter(np.array([1.0, 2.0]))
    g = Graph(ad.square(x))
    g.forward()
    with pytest.raises(ShapeError):
        g.backward()


def test_mlp_finite_difference():
    rng = np.random.default_rng(0)
    x = parameter(rng.normal(size=(4, 6)).astype(np.float32), name="x")
    w1 = parameter(rng.normal(scale=0.5, size=(6, 8)).astype(np.float32), name="w1")
    w2 = parameter(rng.normal(scale=0.5, size=(8, 5)).astype(np.float32), name="w2")
    w3 = parameter(rng.normal(scale=0.5, size=(5, 3)).astype(np.float32), name="w3")
    h = ad.tanh(ad.matmul(ad.relu(ad.matmul(x, w1)), w2))
    out = ad.tmean(ad.square(ad.matmul(h, w3)))
    check_grads(Graph(out), [x, w1, w2, w3], h=1e-3)


@pytest.mark.parametrize("op", ["add", "sub", "mul", "sigmoid", "tanh", "exp",
                                "log", "square", "sqrt", "softmax",
                                "log_softmax", "logsumexp", "mean_axis"])
def test_layer_gradients(op):
    rng = np.random.default_rng(hash(op) % 2**32)
    a = parameter(rng.uniform(0.5, 2.0, size=(3, 4)).astype(np.float32), name="a")
    b = parameter(rng.uniform(0.5, 2.0, size=(3, 4)).astype(np.float32), name="b")
    two = {"add": ad.add, "sub": ad.sub, "mul": ad.mul}
    if op in two:
        out = two[op](a, b)
        params = [a, b]
    elif op == "logsumexp":
        out = ad.logsumexp(a, axis=1)
        params = [a]
    elif op == "mean_axis":
        out = ad.tmean(a, axis=0)
        params = [a]
    else:
        out = getattr(ad, op)(a)
        params = [a]
    check_grads(Graph(ad.tsum(ad.square(out))), params)


def test_conv_pool_gradients():
    rng = np.random.default_rng(7)
    x = parameter(rng.normal(size=(2, 3, 8, 8)).astype(np.float32), name="x")
    w = parameter(rng.normal(scale=0.3, size=(4, 3, 3, 3)).astype(np.float32), name="w")
    b = parameter(rng.normal(size=(4,)).astype(np.float32), name="b")
    out = ad.max_pool2d(ad.relu(ad.conv2d(x, w, b, padding=1)), 2)
    check_grads(Graph(ad.tmean(ad.square(out))), [x, w, b])


def test_conv_stride_padding_grad():
    rng = np.random.default_rng(9)
    x = parameter(rng.normal(size=(2, 2, 9, 9)).astype(np.float32), name="x")
    w = parameter(rng.normal(scale=0.3, size=(3, 2, 3, 3)).astype(np.float32), name="w")
    out = ad.conv2d(x, w, stride=2, padding=1)
    check_grads(Graph(ad.tmean(ad.square(out))), [x, w])


def test_broadcast_grad():
    rng = np.random.default_rng(3)
    a = parameter(rng.normal(size=(4, 5)).astype(np.float32), name="a")
    b = parameter(rng.normal(size=(1, 5)).astype(np.float32), name="b")
    c = parameter(rng.normal(size=(4, 1)).astype(np.float32), name="c")
    check_grads(Graph(ad.tsum(ad.square(a * b + c))), [a, b, c])


def test_shape_mismatch_names_node():
    x = parameter(np.ones((2, 3)))
    y = parameter(np.ones((4, 5)))
    g = Graph(ad.matmul(x, y))
    with pytest.raises(ShapeError, match="matmul"):
        g.forward()


def test_sgd_single_step():
    p = parameter(np.array([0.0]))
    p.grad = np.array([1.0], dtype=np.float32)
    opt = ad.SGD([p], lr=0.1, momentum=0.0, weight_decay=0.0)
    opt.step()
    assert np.allclose(p.data, [-0.1])


def test_sgd_momentum_unrolled():
    p = parameter(np.array([0.0]))
    opt = ad.SGD([p], lr=0.1, momentum=0.9, weight_decay=0.0)
    p.grad = np.array([1.0], dtype=np.float32)
    opt.step()
    first = p.data.copy()
    p.grad = np.array([1.0], dtype=np.float32)
    opt.step()
    second_update = first - p.data
    assert np.allclose(second_update, 0.1 * (1 + 0.9) * 1.0, atol=1e-6)


def test_weight_decay_shrinks():
    p = parameter(np.array([2.0, -2.0]))
    p.grad = np.zeros(2, dtype=np.float32)
    opt = ad.SGD([p], lr=0.1, momentum=0.0, weight_decay=2e-4)
    opt.step()
    assert np.all(np.sign(p.data) == [1, -1])
    assert np.all(np.abs(p.data) < 2.0)


def test_adam_step_direction():
    p = parameter(np.array([1.0]))
    p.grad = np.array([0.5], dtype=np.float32)
    opt = ad.Adam([p], lr=0.01)
    opt.step()
    assert p.data[0] < 1.0


def test_training_determinism():
    def run():
        rng = np.random.default_rng(42)
        w = parameter(rng.normal(size=(4, 2)).astype(np.float32))
        x = placeholder("x")
        g = Graph(ad.tmean(ad.square(ad.matmul(x, w))), inputs=[x])
        opt = ad.SGD([w], lr=0.05)
        data = rng.normal(size=(8, 4)).astype(np.float32)
        for _ in range(10):
            g.forward(data)
            opt.zero_grad()
            g.backward()
            opt.step()
        return w.data.copy()

    assert np.array_equal(run(), run())


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    tensors = {"w": rng.normal(size=(3, 4)).astype(np.float32),
               "b": rng.normal(size=(4,)).astype(np.float32)}
    p = tmp_path / "model.ency"
    ad.save_checkpoint(p, tensors)
    back = ad.load_checkpoint(p)
    assert set(back) == {"w", "b"}
    for k in tensors:
        assert np.array_equal(tensors[k], back[k])
    assert ad.checkpoint_hash(tensors) == ad.checkpoint_hash(back)


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "bad.ency"
    p.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ad.CheckpointError, match="magic"):
        ad.load_checkpoint(p)
