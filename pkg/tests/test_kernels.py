import numpy as np
import pytest

from riverflow.nn import _conv_numpy, kernels


def naive_conv(x_pad, w, stride):
    """Independent oracle: direct correlation in plain python loops."""
    b, c_in, hp, wp = x_pad.shape
    c_out, _, kh, kw = w.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    out = np.zeros((b, c_out, ho, wo))
    for n in range(b):
        for co in range(c_out):
            for i in range(ho):
                for j in range(wo):
                    patch = x_pad[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[n, co, i, j] = np.sum(patch * w[co])
    return out


@pytest.fixture
def case():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 9, 7))
    w = np.ascontiguousarray(rng.normal(size=(4, 3, 3, 3)))
    return x, w


class TestPadding:
    @pytest.mark.parametrize("size,stride", [(41, 2), (64, 2), (21, 2), (11, 2), (9, 1)])
    def test_same_output_size(self, size, stride):
        out, before, after = kernels.same_padding(size, 3, stride)
        assert out == -(-size // stride)
        assert before + after == max((out - 1) * stride + 3 - size, 0)


class TestNumpyPathAgainstNaiveOracle:
    @pytest.mark.parametrize("stride", [1, 2])
    def test_forward(self, case, stride):
        x, w = case
        x_pad, _, _ = kernels.pad_input(x, 3, stride)
        got = _conv_numpy.conv2d_forward(x_pad, w, stride)
        assert np.max(np.abs(got - naive_conv(x_pad, w, stride))) < 1e-12

    @pytest.mark.parametrize("stride", [1, 2])
    def test_backward_matches_dot_product_identity(self, case, stride):
        # adjoint check: <conv(x), dy> == <x, conv_backward_data(dy)>
        x, w = case
        x_pad, _, _ = kernels.pad_input(x, 3, stride)
        y = _conv_numpy.conv2d_forward(x_pad, w, stride)
        rng = np.random.default_rng(1)
        dy = rng.normal(size=y.shape)
        dx_pad = _conv_numpy.conv2d_backward_data(dy, w, x_pad.shape, stride)
        assert np.sum(y * dy) == pytest.approx(np.sum(x_pad * dx_pad), rel=1e-12)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_weight_gradient_matches_finite_difference(self, case, stride):
        x, w = case
        x_pad, _, _ = kernels.pad_input(x, 3, stride)
        rng = np.random.default_rng(2)
        dy = rng.normal(size=_conv_numpy.conv2d_forward(x_pad, w, stride).shape)
        dw = _conv_numpy.conv2d_backward_weights(x_pad, dy, 3, 3, stride)
        h = 1e-6
        for idx in [(0, 0, 0, 0), (3, 2, 1, 2), (1, 1, 2, 0)]:
            wp, wm = w.copy(), w.copy()
            wp[idx] += h
            wm[idx] -= h
            num = (np.sum(_conv_numpy.conv2d_forward(x_pad, wp, stride) * dy)
                   - np.sum(_conv_numpy.conv2d_forward(x_pad, wm, stride) * dy)) / (2 * h)
            assert dw[idx] == pytest.approx(num, rel=1e-5)


@pytest.mark.skipif(kernels.backend() != "cython", reason="compiled extension unavailable")
class TestCompiledParity:
    """The compiled path must agree with the numpy twin on identical inputs."""

    @pytest.mark.parametrize("stride", [1, 2])
    def test_all_three_kernels(self, case, stride):
        x, w = case
        x_pad, _, _ = kernels.pad_input(x, 3, stride)
        from riverflow.nn import _convext

        y_np = _conv_numpy.conv2d_forward(x_pad, w, stride)
        y_cy = _convext.conv2d_forward(x_pad, w, stride)
        assert np.max(np.abs(y_np - y_cy)) < 1e-12
        rng = np.random.default_rng(3)
        dy = np.ascontiguousarray(rng.normal(size=y_np.shape))
        dw_np = _conv_numpy.conv2d_backward_weights(x_pad, dy, 3, 3, stride)
        dw_cy = _convext.conv2d_backward_weights(x_pad, dy, 3, 3, stride)
        assert np.max(np.abs(dw_np - dw_cy)) < 1e-12
        dx_np = _conv_numpy.conv2d_backward_data(dy, w, x_pad.shape, stride)
        dx_cy = _convext.conv2d_backward_data(dy, w, x_pad.shape, stride)
        assert np.max(np.abs(dx_np - dx_cy)) < 1e-12

    def test_backend_reports_cython(self):
        assert kernels.backend() == "cython"
