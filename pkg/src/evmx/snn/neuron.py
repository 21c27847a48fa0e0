"""Parametric leaky integrate-and-fire neurons with an arctangent surrogate.

Membrane update per timestep (hard reset to v_reset):

    H = V_prev - sigmoid(w) * (V_prev - v_rest) + X
    spike = 1 where H >= v_th else 0
    V_new = v_reset where spiked, else H

sigmoid(w) is the learned leak 1/tau, one scalar w shared by every neuron in
a layer, so tau > 1 for any finite w.  The step function blocks gradients, so
the backward pass substitutes the arctangent pseudo-derivative; a fully
differentiable mode replaces the step with its smooth primitive outright,
which is what makes finite-difference validation of the whole network
meaningful.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from ..errors import ShapeMismatch

DEFAULT_ALPHA = 2.0
DEFAULT_V_TH = 1.0
DEFAULT_V_REST = 0.0
DEFAULT_V_RESET = 0.0
DEFAULT_TAU = 2.0


def surrogate_arctan(x, alpha: float = DEFAULT_ALPHA):
    """Pseudo-derivative alpha / (2 * (1 + ((pi/2) * alpha * x)^2)).

    Peaks at alpha/2 at x == 0, integrates to 1 over the real line, and is
    the exact derivative of spike_primitive.  Polymorphic over floats, numpy
    arrays, and torch tensors.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    return alpha / (2.0 * (1.0 + (math.pi / 2.0 * alpha * x) ** 2))


def spike_primitive(x: torch.Tensor, alpha: float = DEFAULT_ALPHA) -> torch.Tensor:
    """Smooth step (1/pi) * arctan((pi/2) * alpha * x) + 1/2; range (0, 1)."""
    return torch.atan(math.pi / 2.0 * alpha * x) / math.pi + 0.5


class _SpikeATan(torch.autograd.Function):
    """Heaviside forward; arctangent pseudo-derivative backward."""

    @staticmethod
    def forward(ctx, x: torch.Tensor, alpha: float) -> torch.Tensor:
        ctx.save_for_backward(x)
        ctx.alpha = alpha
        return (x >= 0).to(x.dtype)

    @staticmethod
    def backward(ctx, grad_out: torch.Tensor):
        (x,) = ctx.saved_tensors
        return grad_out * surrogate_arctan(x, ctx.alpha), None


def spike_fn(x: torch.Tensor, alpha: float = DEFAULT_ALPHA) -> torch.Tensor:
    return _SpikeATan.apply(x, alpha)


def plif_step(
    v_prev: torch.Tensor,
    x: torch.Tensor,
    w: torch.Tensor | float,
    *,
    v_th: float = DEFAULT_V_TH,
    v_rest: float = DEFAULT_V_REST,
    v_reset: float = DEFAULT_V_RESET,
) -> tuple[torch.Tensor, torch.Tensor]:
    """One membrane update; returns (binary spikes, new potentials).

    Pure dynamics with no gradient machinery; the reference form the layer
    module must agree with.
    """
    v_prev = torch.as_tensor(v_prev)
    x = torch.as_tensor(x)
    if v_prev.shape != x.shape:
        raise ShapeMismatch(f"potential shape {tuple(v_prev.shape)} vs input {tuple(x.shape)}")
    leak = torch.sigmoid(torch.as_tensor(w, dtype=v_prev.dtype))
    h = v_prev - leak * (v_prev - v_rest) + x
    spikes = (h >= v_th).to(h.dtype)
    v_new = torch.where(spikes > 0, torch.as_tensor(v_reset, dtype=h.dtype), h)
    return spikes, v_new


def init_w(tau: float = DEFAULT_TAU) -> float:
    """w with sigmoid(w) == 1/tau, i.e. the leak for a given time constant."""
    if tau <= 1.0:
        raise ValueError(f"tau must be > 1, got {tau}")
    return -math.log(tau - 1.0)


class PLIFNeuron(nn.Module):
    """A grid of PLIF neurons sharing one learnable leak parameter.

    Holds the membrane state across forward() calls within a clip;
    reset_state() must run between clips.  With soft=True the step function
    is replaced by its smooth primitive and the reset gate stays attached to
    the graph, making the whole layer differentiable; in the default hard
    mode spikes are exactly binary and the reset gate is detached.
    """

    def __init__(
        self,
        tau: float = DEFAULT_TAU,
        v_th: float = DEFAULT_V_TH,
        v_rest: float = DEFAULT_V_REST,
        v_reset: float = DEFAULT_V_RESET,
        alpha: float = DEFAULT_ALPHA,
        soft: bool = False,
    ):
        super().__init__()
        self.w = nn.Parameter(torch.tensor(init_w(tau)))
        self.v_th = float(v_th)
        self.v_rest = float(v_rest)
        self.v_reset = float(v_reset)
        self.alpha = float(alpha)
        self.soft = bool(soft)
        self.v: torch.Tensor | None = None

    def reset_state(self) -> None:
        self.v = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.v is None:
            v = torch.full_like(x, self.v_rest)
        else:
            if self.v.shape != x.shape:
                raise ShapeMismatch(
                    f"carried potential shape {tuple(self.v.shape)} vs input {tuple(x.shape)}"
                )
            v = self.v
        h = v - torch.sigmoid(self.w) * (v - self.v_rest) + x
        if self.soft:
            s = spike_primitive(h - self.v_th, self.alpha)
            self.v = (1.0 - s) * h + s * self.v_reset
        else:
            s = spike_fn(h - self.v_th, self.alpha)
            gate = s.detach()
            self.v = (1.0 - gate) * h + gate * self.v_reset
        return s

    def extra_repr(self) -> str:
        return f"tau={1.0 / torch.sigmoid(self.w).item():.3f}, v_th={self.v_th}, soft={self.soft}"
