"""First-order optimization: Adam with bias correction and a cosine schedule.

Written directly against parameter tensors so checkpoints can carry the full
optimizer state as plain named arrays and a resumed run continues bit-exactly.
"""

from __future__ import annotations

import math

import torch


class Adam:
    """Adam with bias-corrected moments.

    update: m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
            p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        if not self.params:
            raise ValueError("no parameters to optimize")
        self.lr = float(lr)
        self.beta1, self.beta2 = (float(b) for b in betas)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m.mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            m_hat = m / bc1
            v_hat = v / bc2
            p.add_(m_hat / (v_hat.sqrt() + self.eps), alpha=-self.lr)

    def state_tensors(self) -> dict[str, torch.Tensor]:
        """Moment estimates as named tensors for checkpointing."""
        out = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"adam.m.{i}"] = m
            out[f"adam.v.{i}"] = v
        return out

    def state_meta(self) -> dict:
        return {"step_count": self.step_count, "lr": self.lr,
                "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    def load_state(self, tensors: dict[str, torch.Tensor], meta: dict) -> None:
        self.step_count = int(meta["step_count"])
        self.lr = float(meta["lr"])
        self.beta1 = float(meta["beta1"])
        self.beta2 = float(meta["beta2"])
        self.eps = float(meta["eps"])
        for i in range(len(self.params)):
            self.m[i].copy_(tensors[f"adam.m.{i}"].reshape(self.m[i].shape))
            self.v[i].copy_(tensors[f"adam.v.{i}"].reshape(self.v[i].shape))


def cosine_lr(epoch: int, total_epochs: int, lr_max: float) -> float:
    """Cosine annealing from lr_max at epoch 0 toward 0 at epoch == total_epochs."""
    if total_epochs < 1:
        raise ValueError(f"total_epochs must be >= 1, got {total_epochs}")
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside 0..{total_epochs}")
    return lr_max * (1.0 + math.cos(math.pi * epoch / total_epochs)) / 2.0
