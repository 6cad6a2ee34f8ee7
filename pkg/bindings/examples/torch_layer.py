"""Custom torch layer wrapping the sparse depth fit.

Forward solves for decoder weights outside the graph; backward reinjects
the exact solver gradients.  Handles are one-shot, so a replayed backward
(e.g. gradcheck, retain_graph) refits to mint a fresh one.

Run directly for a toy end-to-end step: python3 torch_layer.py
"""

import numpy as np
import torch

from basisfit_bindings import py_backward, py_fit


def _rows(channels):
    ch = channels.detach().double().cpu().numpy()
    return np.hstack([np.ones((ch.shape[0], 1)), ch])


class SparseDepthFit(torch.autograd.Function):
    """weights = fit(channels, depths, sigmas); differentiable in the first two."""

    @staticmethod
    def forward(ctx, channels, depths, sigmas, config):
        w, _, handle = py_fit(
            _rows(channels),
            depths.detach().double().cpu().numpy(),
            sigmas.detach().double().cpu().numpy(),
            config,
        )
        ctx.save_for_backward(channels, depths, sigmas)
        ctx.config, ctx.handle = config, handle
        return channels.new_tensor(w)

    @staticmethod
    def backward(ctx, grad_w):
        channels, depths, sigmas = ctx.saved_tensors
        handle, ctx.handle = ctx.handle, None
        if handle is None:  # backward replay: refit for a fresh one-shot handle
            _, _, handle = py_fit(
                _rows(channels),
                depths.detach().double().cpu().numpy(),
                sigmas.detach().double().cpu().numpy(),
                ctx.config,
            )
        gb, gd = py_backward(handle, grad_w.detach().double().cpu().numpy())
        return channels.new_tensor(gb[:, 1:]), depths.new_tensor(gd), None, None


def fit_weights(channels, depths, sigmas, config=None):
    return SparseDepthFit.apply(channels, depths, sigmas, dict(config or {}))


if __name__ == "__main__":
    torch.manual_seed(0)
    w_true = torch.tensor([0.4, -0.3, 0.2, 0.5], dtype=torch.float64)
    channels = torch.randn(64, 3, dtype=torch.float64, requires_grad=True)
    depths = (1.0 + torch.exp(-(w_true[0] + channels @ w_true[1:]))).detach().requires_grad_(True)
    sigmas = torch.full((64,), 0.05, dtype=torch.float64)

    w = fit_weights(channels, depths, sigmas, {"lambda": 1e-6, "iterations": 2, "robust": False})
    dense = 1.0 + torch.exp(-(w[0] + channels @ w[1:]))  # decode back to depth, in-graph
    loss = torch.nn.functional.mse_loss(dense, depths)
    loss.backward()
    print(f"weights {w.detach().numpy().round(4)} (true {w_true.numpy()})")
    print(f"loss {loss.item():.3e}  |grad channels| {channels.grad.norm():.3e}  "
          f"|grad depths| {depths.grad.norm():.3e}")
