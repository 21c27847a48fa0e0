"""Spiking network engine: neuron dynamics, layers, training, checkpoints."""

from .neuron import PLIFNeuron, plif_step, surrogate_arctan, spike_primitive
from .network import (
    LayerSpec,
    NetworkSpec,
    SpikingNetwork,
    build_network_spec,
    forward_clip,
    backward_clip,
    mse_loss,
)
from .train import TrainConfig, TrainResult, EvalResult, train, evaluate
from .checkpoint import save_snn, load_snn, SNN_MAGIC

__all__ = [
    "PLIFNeuron", "plif_step", "surrogate_arctan", "spike_primitive",
    "LayerSpec", "NetworkSpec", "SpikingNetwork", "build_network_spec",
    "forward_clip", "backward_clip", "mse_loss",
    "TrainConfig", "TrainResult", "EvalResult", "train", "evaluate",
    "save_snn", "load_snn", "SNN_MAGIC",
]
