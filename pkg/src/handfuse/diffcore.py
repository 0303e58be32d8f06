"""Differentiable building blocks with seeded deterministic initialization.

Tensor math and reverse-mode differentiation are delegated to torch; this
module pins down the pieces the rest of the package builds on (seeded
fan-in init, attention, spiral convolution, soft-argmax) and the
finite-difference gradient harness that arbitrates correctness of every
differentiable path.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


def assert_all_finite(x: torch.Tensor, what: str = "tensor") -> None:
    if not torch.isfinite(x).all():
        raise FloatingPointError(f"{what} contains NaN or Inf")


class ParamBlock(nn.Module):
    """nn.Module whose parameters are a pure function of (constructor args, seed).

    Re-initialization with the same seed is bit-identical; parameters are
    drawn in a fixed order from a dedicated generator.
    """

    def __init__(self, seed: int):
        super().__init__()
        self.seed = int(seed)
        self._gen = torch.Generator()
        self._gen.manual_seed(self.seed)

    def _fan_in_uniform(self, *shape: int, fan_in: int) -> nn.Parameter:
        bound = 1.0 / math.sqrt(max(fan_in, 1))
        w = torch.empty(*shape)
        w.uniform_(-bound, bound, generator=self._gen)
        return nn.Parameter(w)


class Linear(ParamBlock):
    def __init__(self, in_features: int, out_features: int, seed: int,
                 bias: bool = True, identity_init: bool = False,
                 zero_init: bool = False):
        super().__init__(seed)
        if identity_init:
            w = torch.zeros(out_features, in_features)
            for i in range(min(out_features, in_features)):
                w[i, i] = 1.0
            self.weight = nn.Parameter(w)
        elif zero_init:
            self.weight = nn.Parameter(torch.zeros(out_features, in_features))
        else:
            self.weight = self._fan_in_uniform(out_features, in_features,
                                               fan_in=in_features)
        self.bias = nn.Parameter(torch.zeros(out_features)) if bias else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.weight, self.bias)


class MLP(ParamBlock):
    """Linear stack with ReLU between layers; no hidden dims = single linear."""

    def __init__(self, in_features: int, hidden: tuple[int, ...],
                 out_features: int, seed: int, identity_init: bool = False,
                 zero_init: bool = False):
        super().__init__(seed)
        dims = [in_features, *hidden, out_features]
        layers = []
        for i, (a, b) in enumerate(zip(dims, dims[1:])):
            last = i == len(dims) - 2
            layers.append(Linear(a, b, seed=self.seed + 101 * (i + 1),
                                 identity_init=identity_init and len(hidden) == 0,
                                 zero_init=zero_init and last))
        self.layers = nn.ModuleList(layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i + 1 < len(self.layers):
                x = F.relu(x)
        return x


class Conv2d(ParamBlock):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 seed: int, stride: int = 1, padding: int = 0):
        super().__init__(seed)
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = self._fan_in_uniform(
            out_channels, in_channels, kernel_size, kernel_size, fan_in=fan_in)
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.stride = stride
        self.padding = padding

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride,
                        padding=self.padding)


def softmax(x: torch.Tensor, axis: int) -> torch.Tensor:
    return torch.softmax(x, dim=axis)


def layer_norm(x: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Normalize over the last dimension (no learned affine)."""
    return F.layer_norm(x, x.shape[-1:], eps=eps)


def scaled_dot_attention(q: torch.Tensor, k: torch.Tensor,
                         v: torch.Tensor) -> torch.Tensor:
    """softmax(q kᵀ / √d) v over the last two dims; leading dims broadcast."""
    d = q.shape[-1]
    if k.shape[-1] != d:
        raise ValueError(f"query dim {d} != key dim {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError("key and value token counts differ")
    logits = q @ k.transpose(-1, -2) / math.sqrt(d)
    return torch.softmax(logits, dim=-1) @ v


class SpiralConv(ParamBlock):
    """Gather spiral-ordered neighbor features and apply a shared linear map."""

    def __init__(self, in_channels: int, out_channels: int,
                 spiral_indices: np.ndarray, seed: int,
                 zero_init: bool = False):
        super().__init__(seed)
        idx = torch.as_tensor(np.asarray(spiral_indices), dtype=torch.long)
        if idx.min() < 0 or idx.max() >= idx.shape[0]:
            raise IndexError("spiral indices out of range")
        self.register_buffer("indices", idx)
        self.linear = Linear(in_channels * idx.shape[1], out_channels,
                             seed=seed + 1, zero_init=zero_init)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (..., V, C) -> gather (..., V, S, C) -> (..., V, S*C)
        g = x[..., self.indices, :]
        g = g.reshape(*g.shape[:-2], -1)
        return self.linear(g)


def soft_argmax_2d(logits: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Differentiable 2D argmax of per-channel heatmap logits.

    logits: (..., J, H, W). Returns (coords (..., J, 2) in [0,1] as (x, y),
    probs (..., J, H, W)).
    """
    *lead, j, h, w = logits.shape
    flat = logits.reshape(*lead, j, h * w)
    probs = torch.softmax(flat, dim=-1).reshape(*lead, j, h, w)
    ys = (torch.arange(h, dtype=logits.dtype) + 0.5) / h
    xs = (torch.arange(w, dtype=logits.dtype) + 0.5) / w
    x = (probs.sum(dim=-2) * xs).sum(dim=-1)
    y = (probs.sum(dim=-1) * ys).sum(dim=-1)
    return torch.stack([x, y], dim=-1), probs


def heatmap_pool(probs: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
    """Per-joint spatial average of features weighted by heatmap probabilities.

    probs: (..., J, H, W) summing to 1 over HxW; features: (..., C, H, W).
    Returns (..., J, C).
    """
    return torch.einsum("...jhw,...chw->...jc", probs, features)


def upsample2x(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="nearest")


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def grad_check(fn, inputs: list[torch.Tensor], eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``fn`` must be scalar-valued and pure in its tensor inputs; inputs should
    be float64 for the documented tolerances to be meaningful.
    """
    base = [torch.as_tensor(x).detach().clone() for x in inputs]
    leaves = [b.clone().requires_grad_(True) for b in base]
    out = fn(*leaves)
    analytic = torch.autograd.grad(out, leaves, allow_unused=True)
    worst = 0.0
    with torch.no_grad():
        for t, (b, g) in enumerate(zip(base, analytic)):
            flat = b.reshape(-1)
            gflat = (g.reshape(-1) if g is not None
                     else torch.zeros_like(flat))
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = float(fn(*base))
                flat[i] = orig - eps
                f_minus = float(fn(*base))
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = float(gflat[i])
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, rel)
    return worst


def grad_check_params(module: nn.Module, forward, eps: float = 1e-5) -> float:
    """grad_check over every parameter of ``module``.

    ``forward`` is a nullary callable returning a scalar computed from the
    module's current parameters. The module should be in float64.
    """
    params = list(module.parameters())
    out = forward()
    analytic = torch.autograd.grad(out, params, allow_unused=True)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, analytic):
            flat = p.reshape(-1)
            gflat = (g.reshape(-1) if g is not None
                     else torch.zeros(flat.numel(), dtype=p.dtype))
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = float(forward())
                flat[i] = orig - eps
                f_minus = float(forward())
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = float(gflat[i])
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# parameter (de)serialization
# ---------------------------------------------------------------------------

def state_tensors(module: nn.Module) -> dict[str, np.ndarray]:
    """All parameters and buffers as numpy arrays keyed by state-dict name."""
    return {name: t.detach().cpu().numpy().copy()
            for name, t in module.state_dict().items()}


def load_state_tensors(module: nn.Module, tensors: dict[str, np.ndarray]) -> None:
    state = {name: torch.as_tensor(arr) for name, arr in tensors.items()}
    module.load_state_dict(state)
