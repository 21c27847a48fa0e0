"""Spiking classifier: layer specs, the network module, single-clip forward/backward.

Architecture family (defaults mirror the recognition model):
N_c blocks of [Conv2d(k3 s1 p1, 32ch, no bias) - BatchNorm2d - PLIF - MaxPool2d(2,2)],
then N_f blocks of [Dropout - FullyConnected - PLIF] ending at 10*n_classes
features, then a voting pool averaging each group of 10 spike trains into one
class score.  Per-timestep outputs are averaged over the clip's true length,
so scores live in [0, 1] and MSE against one-hot targets is well-scaled.

Stateless layers run on all timesteps at once with time folded into the batch
axis (so batch-norm statistics pool over batch, time, and space); only the
PLIF layers unroll over time.  Dropout draws one mask per clip and reuses it
across timesteps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from ..errors import (
    EmptyStream,
    InvalidSpec,
    NoRecordedForward,
    NonFiniteActivation,
    ShapeMismatch,
)
from ..representation import InputClip
from .neuron import DEFAULT_ALPHA, DEFAULT_TAU, PLIFNeuron

_KINDS = ("conv", "batchnorm", "plif", "maxpool", "dropout", "fc", "voting")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidSpec(f"unknown layer kind {self.kind!r}, expected one of {_KINDS}")

    def get(self, key, default=None):
        return self.params.get(key, default)


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer list plus the input geometry it must compose over."""

    input_channels: int
    input_height: int
    input_width: int
    n_classes: int
    layers: tuple[LayerSpec, ...]
    alpha: float = DEFAULT_ALPHA
    seed: int = 0

    def __post_init__(self):
        for _ in self.shape_walk():  # raises InvalidSpec on any mismatch
            pass

    def shape_walk(self):
        """Yield (layer, in_shape, out_shape); shapes are ('spatial', c, h, w)
        or ('flat', f).  Raises InvalidSpec when shapes do not compose or the
        network does not end in a voting pool producing n_classes scores."""
        shape = ("spatial", self.input_channels, self.input_height, self.input_width)
        for i, layer in enumerate(self.layers):
            where = f"layer {i} ({layer.kind})"
            k = layer.kind
            if k == "conv":
                if shape[0] != "spatial":
                    raise InvalidSpec(f"{where}: conv needs spatial input, got {shape}")
                _, c, h, w = shape
                kk = layer.get("kernel", 3)
                st = layer.get("stride", 1)
                pd = layer.get("padding", 1)
                oc = layer.get("out_channels")
                if not oc or oc < 1:
                    raise InvalidSpec(f"{where}: conv needs out_channels >= 1")
                oh = (h + 2 * pd - kk) // st + 1
                ow = (w + 2 * pd - kk) // st + 1
                if oh < 1 or ow < 1:
                    raise InvalidSpec(f"{where}: conv collapses {h}x{w} to {oh}x{ow}")
                out = ("spatial", oc, oh, ow)
            elif k == "batchnorm":
                if shape[0] != "spatial":
                    raise InvalidSpec(f"{where}: batchnorm needs spatial input, got {shape}")
                out = shape
            elif k == "maxpool":
                if shape[0] != "spatial":
                    raise InvalidSpec(f"{where}: maxpool needs spatial input, got {shape}")
                _, c, h, w = shape
                kk = layer.get("kernel", 2)
                st = layer.get("stride", 2)
                oh = (h - kk) // st + 1
                ow = (w - kk) // st + 1
                if oh < 1 or ow < 1:
                    raise InvalidSpec(f"{where}: maxpool collapses {h}x{w} to {oh}x{ow}")
                out = ("spatial", c, oh, ow)
            elif k in ("plif", "dropout"):
                out = shape
            elif k == "fc":
                of = layer.get("out_features")
                if not of or of < 1:
                    raise InvalidSpec(f"{where}: fc needs out_features >= 1")
                out = ("flat", of)
            elif k == "voting":
                g = layer.get("group", 10)
                if shape[0] != "flat":
                    raise InvalidSpec(f"{where}: voting needs flat input, got {shape}")
                f = shape[1]
                if g < 1 or f % g != 0:
                    raise InvalidSpec(f"{where}: {f} features not divisible into groups of {g}")
                out = ("flat", f // g)
            yield layer, shape, out
            shape = out
        if not self.layers or self.layers[-1].kind != "voting":
            raise InvalidSpec("network must end with a voting pool")
        if shape != ("flat", self.n_classes):
            raise InvalidSpec(f"network output {shape} != {self.n_classes} class scores")

    def to_config(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "input_height": self.input_height,
            "input_width": self.input_width,
            "n_classes": self.n_classes,
            "alpha": self.alpha,
            "seed": self.seed,
            "layers": [{"kind": l.kind, **l.params} for l in self.layers],
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "NetworkSpec":
        layers = tuple(
            LayerSpec(d["kind"], {k: v for k, v in d.items() if k != "kind"})
            for d in cfg["layers"]
        )
        return cls(
            input_channels=cfg["input_channels"],
            input_height=cfg["input_height"],
            input_width=cfg["input_width"],
            n_classes=cfg["n_classes"],
            layers=layers,
            alpha=cfg.get("alpha", DEFAULT_ALPHA),
            seed=cfg.get("seed", 0),
        )


def build_network_spec(
    n_classes: int = 21,
    input_hw: tuple[int, int] = (64, 64),
    input_channels: int = 2,
    channels: int = 32,
    conv_blocks: int = 2,
    fc_blocks: int = 2,
    fc_hidden: int = 512,
    votes: int = 10,
    dropout_rate: float = 0.2,
    tau: float = DEFAULT_TAU,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
) -> NetworkSpec:
    """Standard recognition architecture, sized by block counts.

    Defaults give 2 conv blocks of 32 channels and FC sizes 512 then
    10*n_classes, voting in groups of 10.
    """
    if conv_blocks < 1 or fc_blocks < 1:
        raise InvalidSpec("need at least one conv block and one fc block")
    if not 0.0 <= dropout_rate < 1.0:
        raise InvalidSpec(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    layers: list[LayerSpec] = []
    for _ in range(conv_blocks):
        layers.append(LayerSpec("conv", {"out_channels": channels, "kernel": 3,
                                         "stride": 1, "padding": 1}))
        layers.append(LayerSpec("batchnorm", {}))
        layers.append(LayerSpec("plif", {"tau": tau}))
        layers.append(LayerSpec("maxpool", {"kernel": 2, "stride": 2}))
    for j in range(fc_blocks):
        layers.append(LayerSpec("dropout", {"rate": dropout_rate}))
        out = fc_hidden if j < fc_blocks - 1 else votes * n_classes
        layers.append(LayerSpec("fc", {"out_features": out}))
        layers.append(LayerSpec("plif", {"tau": tau}))
    layers.append(LayerSpec("voting", {"group": votes}))
    return NetworkSpec(
        input_channels=input_channels,
        input_height=input_hw[0],
        input_width=input_hw[1],
        n_classes=n_classes,
        layers=tuple(layers),
        alpha=alpha,
        seed=seed,
    )


class ClipDropout(nn.Module):
    """Dropout with one mask per clip, shared across all timesteps."""

    def __init__(self, rate: float, generator: torch.Generator):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise InvalidSpec(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)
        self._generator = generator

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if not self.training or self.rate == 0.0:
            return z
        keep = 1.0 - self.rate
        shape = (z.shape[0], 1) + tuple(z.shape[2:])
        mask = (
            torch.rand(shape, generator=self._generator, dtype=z.dtype) < keep
        ).to(z.dtype) / keep
        return z * mask

    def extra_repr(self) -> str:
        return f"rate={self.rate}"


class VotingPool(nn.Module):
    """Average each consecutive group of `group` features into one score."""

    def __init__(self, group: int):
        super().__init__()
        self.group = int(group)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        *lead, f = z.shape
        if f % self.group != 0:
            raise ShapeMismatch(f"{f} features not divisible into groups of {self.group}")
        return z.reshape(*lead, f // self.group, self.group).mean(dim=-1)

    def extra_repr(self) -> str:
        return f"group={self.group}"


class SpikingNetwork(nn.Module):
    """The recognition network over (B, T, C, H, W) clips.

    All randomness (parameter init, dropout masks) flows through one torch
    Generator seeded from spec.seed, so two networks built from the same spec
    are parameter-identical and train identically given the same data order.
    soft=True swaps every neuron's step function for its smooth primitive
    (and keeps reset gates attached): the gradient-validation mode.
    """

    def __init__(self, spec: NetworkSpec, soft: bool = False):
        super().__init__()
        self.spec = spec
        self.soft = bool(soft)
        self.generator = torch.Generator()
        self.generator.manual_seed(spec.seed)
        self._recorded: tuple[InputClip, torch.Tensor] | None = None

        modules: list[nn.Module] = []
        self._kinds: list[str] = []
        for layer, in_shape, _ in spec.shape_walk():
            k = layer.kind
            if k == "conv":
                _, c, _, _ = in_shape
                m = nn.Conv2d(c, layer.get("out_channels"), layer.get("kernel", 3),
                              layer.get("stride", 1), layer.get("padding", 1), bias=False)
            elif k == "batchnorm":
                m = nn.BatchNorm2d(in_shape[1])
            elif k == "plif":
                m = PLIFNeuron(tau=layer.get("tau", DEFAULT_TAU), alpha=spec.alpha,
                               soft=self.soft)
            elif k == "maxpool":
                m = nn.MaxPool2d(layer.get("kernel", 2), layer.get("stride", 2))
            elif k == "dropout":
                m = ClipDropout(layer.get("rate", 0.0), self.generator)
            elif k == "fc":
                f_in = in_shape[1] if in_shape[0] == "flat" else int(np.prod(in_shape[1:]))
                m = nn.Linear(f_in, layer.get("out_features"), bias=True)
            elif k == "voting":
                m = VotingPool(layer.get("group", 10))
            self._kinds.append(k)
            modules.append(m)
        self.net = nn.ModuleList(modules)
        self._init_parameters()

    @torch.no_grad()
    def _init_parameters(self) -> None:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for conv and fc weights and
        biases (Kaiming-uniform fan-in bound); batch-norm starts as identity."""
        for m in self.net:
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                bound = 1.0 / (fan_in ** 0.5)
                m.weight.uniform_(-bound, bound, generator=self.generator)
            elif isinstance(m, nn.Linear):
                bound = 1.0 / (m.in_features ** 0.5)
                m.weight.uniform_(-bound, bound, generator=self.generator)
                m.bias.uniform_(-bound, bound, generator=self.generator)
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.fill_(1.0)
                m.bias.fill_(0.0)

    def reset_states(self) -> None:
        for m in self.net:
            if isinstance(m, PLIFNeuron):
                m.reset_state()

    def forward(self, x: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        """Scores (B, n_classes): per-timestep class votes averaged over each
        clip's true length; padded timesteps run through the layers but are
        masked out of the average."""
        if x.ndim != 5:
            raise ShapeMismatch(f"expected (B, T, C, H, W), got shape {tuple(x.shape)}")
        b, t, c, h, w = x.shape
        s = self.spec
        if (c, h, w) != (s.input_channels, s.input_height, s.input_width):
            raise ShapeMismatch(
                f"input frames {c}x{h}x{w} do not match network input "
                f"{s.input_channels}x{s.input_height}x{s.input_width}"
            )
        if t == 0:
            raise EmptyStream("clip has no frames")
        if lengths is None:
            lengths = torch.full((b,), t, dtype=torch.long)
        else:
            lengths = torch.as_tensor(lengths, dtype=torch.long)
            if lengths.shape != (b,) or (lengths < 1).any() or (lengths > t).any():
                raise ShapeMismatch(f"lengths must be (B,) in 1..{t}")

        self.reset_states()
        z = x
        for kind, m in zip(self._kinds, self.net):
            if kind in ("conv", "batchnorm", "maxpool"):
                z = m(z.flatten(0, 1)).unflatten(0, (b, t))
            elif kind == "plif":
                steps = [m(z[:, k]) for k in range(t)]
                z = torch.stack(steps, dim=1)
            elif kind == "dropout":
                z = m(z)
            elif kind == "fc":
                z = m(z.reshape(b, t, -1))
            elif kind == "voting":
                z = m(z)

        mask = (torch.arange(t).unsqueeze(0) < lengths.unsqueeze(1)).to(z.dtype)
        scores = (z * mask.unsqueeze(-1)).sum(dim=1) / lengths.to(z.dtype).unsqueeze(1)
        if not torch.isfinite(scores).all():
            raise NonFiniteActivation("non-finite class scores; check inputs and learning rate")
        return scores


def mse_loss(scores: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all score entries (and over the batch if 2-D)."""
    if scores.shape != targets.shape:
        raise ShapeMismatch(f"scores {tuple(scores.shape)} vs targets {tuple(targets.shape)}")
    return ((scores - targets) ** 2).mean()


def forward_clip(net: SpikingNetwork, clip: InputClip, record: bool = False) -> np.ndarray:
    """Class scores for one clip.

    record=True keeps the autograd graph so backward_clip can follow; without
    it the pass runs grad-free.
    """
    x = torch.as_tensor(clip.data).to(next(net.parameters()).dtype).unsqueeze(0)
    if record:
        scores = net(x)
        net._recorded = (clip, scores)
    else:
        with torch.no_grad():
            scores = net(x)
    return scores.detach().squeeze(0).cpu().numpy()


def backward_clip(net: SpikingNetwork, clip: InputClip, target: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients of the recorded forward's MSE loss against target.

    Requires forward_clip(net, clip, record=True) first for the same clip
    object; raises NoRecordedForward otherwise.  Clears the record.
    """
    rec = net._recorded
    if rec is None or rec[0] is not clip:
        raise NoRecordedForward("no recorded forward pass for this clip")
    _, scores = rec
    net._recorded = None
    t = torch.as_tensor(np.asarray(target), dtype=scores.dtype).reshape(scores.shape)
    loss = mse_loss(scores, t)
    names, params = zip(*net.named_parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return {
        n: (g if g is not None else torch.zeros_like(p)).detach().cpu().numpy().copy()
        for n, p, g in zip(names, params, grads)
    }
