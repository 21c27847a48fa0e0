"""Classifier checkpoints: network spec + parameters (+ optimizer) in one file."""

from __future__ import annotations

import torch

from ..container import load_container, save_container
from ..optim import Adam
from .network import NetworkSpec, SpikingNetwork

SNN_MAGIC = b"SNN1"


def save_snn(path, net: SpikingNetwork, optimizer: Adam | None = None,
             extra_meta: dict | None = None) -> None:
    """Write spec, every state tensor (parameters, batch-norm statistics), and
    optionally the optimizer moments.  Same state always writes identical bytes."""
    tensors = {k: v.detach().cpu().numpy() for k, v in net.state_dict().items()}
    meta = dict(extra_meta or {})
    if optimizer is not None:
        for k, v in optimizer.state_tensors().items():
            tensors[k] = v.detach().cpu().numpy()
        meta["optimizer"] = optimizer.state_meta()
    save_container(path, SNN_MAGIC, net.spec.to_config(), tensors, meta)


def load_snn(path, soft: bool = False) -> tuple[SpikingNetwork, Adam | None, dict]:
    """Rebuild the network from a checkpoint; returns (net, optimizer or None, meta)."""
    config, tensors, meta = load_container(path, SNN_MAGIC)
    spec = NetworkSpec.from_config(config)
    net = SpikingNetwork(spec, soft=soft)
    state = {k: torch.from_numpy(tensors[k].copy()) for k in net.state_dict().keys()}
    net.load_state_dict(state)
    adam = None
    if "optimizer" in meta:
        adam = Adam(net.parameters(), lr=meta["optimizer"]["lr"])
        adam.load_state(
            {k: torch.from_numpy(v.copy()) for k, v in tensors.items() if k.startswith("adam.")},
            meta["optimizer"],
        )
    return net, adam, meta
