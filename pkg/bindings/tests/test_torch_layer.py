"""The example torch layer against torch's own numerical gradcheck."""

import importlib.util
import sys
from pathlib import Path

import numpy as np
import pytest

torch = pytest.importorskip("torch")

from basisfit_bindings import py_backward, py_fit

_EXAMPLE = Path(__file__).resolve().parents[1] / "examples" / "torch_layer.py"


def _load_example():
    spec = importlib.util.spec_from_file_location("torch_layer_example", _EXAMPLE)
    module = importlib.util.module_from_spec(spec)
    sys.modules[spec.name] = module
    spec.loader.exec_module(module)
    return module


layer = _load_example()


def _inputs(seed, n=14, m=3):
    gen = torch.Generator().manual_seed(seed)
    channels = torch.randn(n, m, generator=gen, dtype=torch.float64)
    w_true = torch.randn(m + 1, generator=gen, dtype=torch.float64) * 0.4
    logits = w_true[0] + channels @ w_true[1:]
    noise = 0.05 * torch.randn(n, generator=gen, dtype=torch.float64)
    depths = 1.0 + torch.exp(-(logits + noise))
    sigmas = torch.full((n,), 0.1, dtype=torch.float64)
    return channels, depths, sigmas


@pytest.mark.parametrize("iterations", [0, 2])
def test_gradcheck(iterations):
    channels, depths, sigmas = _inputs(100 + iterations)
    channels.requires_grad_(True)
    depths.requires_grad_(True)
    config = {"lambda": 1e-4, "iterations": iterations, "robust": False}

    def fn(ch, d):
        return layer.SparseDepthFit.apply(ch, d, sigmas, config)

    assert torch.autograd.gradcheck(
        fn, (channels, depths), eps=1e-6, atol=1e-4, rtol=1e-4
    )


def test_layer_backward_matches_binding_directly():
    channels, depths, sigmas = _inputs(200, n=30)
    channels.requires_grad_(True)
    depths.requires_grad_(True)
    config = {"lambda": 1e-3, "iterations": 2, "robust": True}

    weights = layer.fit_weights(channels, depths, sigmas, config)
    coef = torch.arange(1.0, weights.numel() + 1, dtype=torch.float64)
    (coef * weights).sum().backward()

    rows = np.hstack(
        [np.ones((30, 1)), channels.detach().numpy()]
    )
    _, _, handle = py_fit(rows, depths.detach().numpy(), sigmas.numpy(), config)
    gb, gd = py_backward(handle, coef.numpy())
    np.testing.assert_allclose(channels.grad.numpy(), gb[:, 1:], rtol=0, atol=1e-14)
    np.testing.assert_allclose(depths.grad.numpy(), gd, rtol=0, atol=1e-14)


def test_repeated_backward_on_one_graph():
    """retain_graph replays must survive the one-shot handles via refit."""
    channels, depths, sigmas = _inputs(300)
    channels.requires_grad_(True)
    weights = layer.fit_weights(channels, depths, sigmas, {"iterations": 1})
    first = weights.sum()
    first.backward(retain_graph=True)
    grad_once = channels.grad.clone()
    channels.grad = None
    first.backward()
    np.testing.assert_array_equal(channels.grad.numpy(), grad_once.numpy())


def test_example_script_runs(capsys):
    """The __main__ demo block is executable as documented."""
    import runpy

    runpy.run_path(str(_EXAMPLE), run_name="__main__")
    out = capsys.readouterr().out
    assert "weights" in out and "loss" in out
