"""Conditional VAE reconstructing intensity frames from event-count frames.

Encoder: target frame and condition frames concatenated channel-wise, two
stride-2 convolutions with ReLU, then linear heads for mu and log-variance.
Decoder: latent sample concatenated with the flattened condition, one linear
layer up to the encoder's final spatial grid, two stride-2 transposed
convolutions, sigmoid output.  Trained by Adam on pixel MSE plus the analytic
KL term against a standard normal prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import EmptyDataset, InvalidSpec, NonFiniteActivation, ShapeMismatch
from .optim import Adam
from .container import load_container, save_container

CVAE_MAGIC = b"CVA1"


@dataclass(frozen=True)
class CVAEConfig:
    latent_dim: int = 32
    input_side: int = 64
    condition_channels: int = 2
    target_channels: int = 1
    enc_channels: tuple[int, int] = (16, 32)
    kl_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise InvalidSpec(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.input_side < 8 or self.input_side % 4 != 0:
            raise InvalidSpec(
                f"input_side must be >= 8 and divisible by 4 (two stride-2 stages), "
                f"got {self.input_side}"
            )
        if self.condition_channels < 1 or self.target_channels < 1:
            raise InvalidSpec("channel counts must be >= 1")
        if len(self.enc_channels) != 2 or min(self.enc_channels) < 1:
            raise InvalidSpec(f"enc_channels must be two positive sizes, got {self.enc_channels}")
        if self.kl_weight < 0:
            raise InvalidSpec(f"kl_weight must be >= 0, got {self.kl_weight}")

    @property
    def grid_side(self) -> int:
        return self.input_side // 4

    @property
    def enc_flat(self) -> int:
        return self.enc_channels[1] * self.grid_side * self.grid_side

    @property
    def cond_flat(self) -> int:
        return self.condition_channels * self.input_side * self.input_side

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "input_side": self.input_side,
            "condition_channels": self.condition_channels,
            "target_channels": self.target_channels,
            "enc_channels": list(self.enc_channels),
            "kl_weight": self.kl_weight,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CVAEConfig":
        return cls(
            latent_dim=d["latent_dim"],
            input_side=d["input_side"],
            condition_channels=d["condition_channels"],
            target_channels=d["target_channels"],
            enc_channels=tuple(d["enc_channels"]),
            kl_weight=d["kl_weight"],
            seed=d.get("seed", 0),
        )


class CVAE(nn.Module):
    """Encoder, reparameterization, and condition-aware decoder in one module.

    All randomness (init, latent noise) flows through one generator seeded
    from the config, so builds and training runs are reproducible.
    """

    def __init__(self, config: CVAEConfig):
        super().__init__()
        self.config = config
        self.generator = torch.Generator()
        self.generator.manual_seed(config.seed)
        e1, e2 = config.enc_channels
        in_ch = config.target_channels + config.condition_channels
        self.enc_conv1 = nn.Conv2d(in_ch, e1, 3, stride=2, padding=1)
        self.enc_conv2 = nn.Conv2d(e1, e2, 3, stride=2, padding=1)
        self.fc_mu = nn.Linear(config.enc_flat, config.latent_dim)
        self.fc_logvar = nn.Linear(config.enc_flat, config.latent_dim)
        self.fc_dec = nn.Linear(config.latent_dim + config.cond_flat, config.enc_flat)
        self.dec_conv1 = nn.ConvTranspose2d(e2, e1, 4, stride=2, padding=1)
        self.dec_conv2 = nn.ConvTranspose2d(e1, config.target_channels, 4, stride=2, padding=1)
        self._init_parameters()

    @torch.no_grad()
    def _init_parameters(self) -> None:
        for m in (self.enc_conv1, self.enc_conv2, self.fc_mu, self.fc_logvar,
                  self.fc_dec, self.dec_conv1, self.dec_conv2):
            bound = 1.0 / math.sqrt(m.weight[0].numel())
            m.weight.uniform_(-bound, bound, generator=self.generator)
            m.bias.uniform_(-bound, bound, generator=self.generator)

    def _check_target(self, x: torch.Tensor) -> torch.Tensor:
        c = self.config
        if x.ndim == 3:
            x = x.unsqueeze(1) if x.shape[0] != c.target_channels else x.unsqueeze(0)
        if x.ndim == 2:
            x = x.unsqueeze(0).unsqueeze(0)
        if x.ndim != 4 or x.shape[1:] != (c.target_channels, c.input_side, c.input_side):
            raise ShapeMismatch(
                f"target must be (B, {c.target_channels}, {c.input_side}, {c.input_side}), "
                f"got {tuple(x.shape)}"
            )
        return x

    def _check_condition(self, cond: torch.Tensor) -> torch.Tensor:
        c = self.config
        if cond.ndim == 3:
            cond = cond.unsqueeze(0)
        if cond.ndim != 4 or cond.shape[1:] != (c.condition_channels, c.input_side, c.input_side):
            raise ShapeMismatch(
                f"condition must be (B, {c.condition_channels}, {c.input_side}, "
                f"{c.input_side}), got {tuple(cond.shape)}"
            )
        return cond

    def encode(self, x: torch.Tensor, cond: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self._check_target(x)
        cond = self._check_condition(cond)
        if x.shape[0] != cond.shape[0]:
            raise ShapeMismatch(f"batch sizes differ: {x.shape[0]} targets vs {cond.shape[0]} conditions")
        h = torch.relu(self.enc_conv1(torch.cat([x, cond], dim=1)))
        h = torch.relu(self.enc_conv2(h))
        h = h.flatten(1)
        mu = self.fc_mu(h)
        logvar = self.fc_logvar(h)
        if not (torch.isfinite(mu).all() and torch.isfinite(logvar).all()):
            raise NonFiniteActivation("encoder produced non-finite latent statistics")
        return mu, logvar

    def reparameterize(self, mu: torch.Tensor, logvar: torch.Tensor,
                       eps: torch.Tensor | None = None) -> torch.Tensor:
        """z = mu + exp(logvar / 2) * eps; eps defaults to a seeded normal draw."""
        if mu.shape != logvar.shape:
            raise ShapeMismatch(f"mu {tuple(mu.shape)} vs logvar {tuple(logvar.shape)}")
        if eps is None:
            eps = torch.randn(mu.shape, generator=self.generator, dtype=mu.dtype)
        eps = torch.as_tensor(eps, dtype=mu.dtype)
        if eps.shape != mu.shape:
            raise ShapeMismatch(f"eps {tuple(eps.shape)} vs mu {tuple(mu.shape)}")
        return mu + torch.exp(logvar / 2.0) * eps

    def decode(self, z: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        cond = self._check_condition(cond)
        if z.ndim == 1:
            z = z.unsqueeze(0)
        if z.ndim != 2 or z.shape[1] != self.config.latent_dim:
            raise ShapeMismatch(f"z must be (B, {self.config.latent_dim}), got {tuple(z.shape)}")
        if z.shape[0] != cond.shape[0]:
            raise ShapeMismatch(f"batch sizes differ: {z.shape[0]} latents vs {cond.shape[0]} conditions")
        g = self.config.grid_side
        h = self.fc_dec(torch.cat([z, cond.flatten(1)], dim=1))
        h = torch.relu(h).reshape(-1, self.config.enc_channels[1], g, g)
        h = torch.relu(self.dec_conv1(h))
        return torch.sigmoid(self.dec_conv2(h))

    def forward(self, x: torch.Tensor, cond: torch.Tensor,
                eps: torch.Tensor | None = None):
        mu, logvar = self.encode(x, cond)
        z = self.reparameterize(mu, logvar, eps)
        x_hat = self.decode(z, cond)
        return x_hat, mu, logvar, z


def kl_divergence(mu, logvar) -> torch.Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over the latent dimension.

    -1/2 * sum_j (1 + logvar_j - mu_j^2 - exp(logvar_j)); >= 0, zero exactly
    at mu = 0, logvar = 0.  Batched inputs return one value per row.
    """
    mu = torch.as_tensor(mu)
    logvar = torch.as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise ShapeMismatch(f"mu {tuple(mu.shape)} vs logvar {tuple(logvar.shape)}")
    return -0.5 * (1.0 + logvar - mu * mu - torch.exp(logvar)).sum(dim=-1)


def elbo_loss(x: torch.Tensor, x_hat: torch.Tensor, mu: torch.Tensor,
              logvar: torch.Tensor, kl_weight: float = 1.0):
    """(total, reconstruction term, kl term).

    Reconstruction is pixel MSE; KL is summed over latent dims and averaged
    over the batch; total = recon + kl_weight * kl.
    """
    if x.shape != x_hat.shape:
        raise ShapeMismatch(f"x {tuple(x.shape)} vs x_hat {tuple(x_hat.shape)}")
    recon = ((x - x_hat) ** 2).mean()
    kl = kl_divergence(mu, logvar)
    kl = kl.mean() if kl.ndim > 0 else kl
    return recon + kl_weight * kl, recon, kl


@dataclass(frozen=True)
class CVAETrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidSpec(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidSpec("epochs and batch_size must be >= 1")


@dataclass(frozen=True)
class CVAETrainResult:
    log_lines: tuple[str, ...]
    final_loss: float
    final_recon: float
    final_kl: float
    optimizer: Adam


def _paired_tensors(conditions, targets, config: CVAEConfig):
    c = np.asarray(conditions, dtype=np.float32)
    t = np.asarray(targets, dtype=np.float32)
    if t.ndim == 3:
        t = t[:, None, :, :]
    if c.ndim != 4 or t.ndim != 4 or c.shape[0] != t.shape[0]:
        raise ShapeMismatch(f"conditions {c.shape} vs targets {t.shape}")
    side = config.input_side
    if c.shape[1:] != (config.condition_channels, side, side):
        raise ShapeMismatch(f"conditions {c.shape[1:]} do not match config {config}")
    if t.shape[1:] != (config.target_channels, side, side):
        raise ShapeMismatch(f"targets {t.shape[1:]} do not match config {config}")
    return torch.from_numpy(c), torch.from_numpy(t)


def train_cvae(model: CVAE, conditions, targets, config: CVAETrainConfig,
               log_fn=None) -> CVAETrainResult:
    """Train in place on (condition, target) pairs; constant learning rate.

    Log line format: `epoch,lr,loss,recon,kl`.  Deterministic given the model
    and config seeds: batch order comes from a seeded shuffle and latent noise
    from the model's own generator.
    """
    cond_all, tgt_all = _paired_tensors(conditions, targets, model.config)
    n = cond_all.shape[0]
    if n == 0:
        raise EmptyDataset("no training pairs")

    adam = Adam(model.parameters(), lr=config.learning_rate,
                betas=(config.beta1, config.beta2), eps=config.eps)
    shuffle_gen = torch.Generator()
    shuffle_gen.manual_seed(config.seed)

    lines: list[str] = []
    loss_v = recon_v = kl_v = 0.0
    for epoch in range(1, config.epochs + 1):
        perm = torch.randperm(n, generator=shuffle_gen).tolist()
        total = total_recon = total_kl = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            x = tgt_all[idx]
            cond = cond_all[idx]
            x_hat, mu, logvar, _ = model(x, cond)
            loss, recon, kl = elbo_loss(x, x_hat, mu, logvar, model.config.kl_weight)
            adam.zero_grad()
            loss.backward()
            adam.step()
            total += loss.item() * len(idx)
            total_recon += recon.item() * len(idx)
            total_kl += kl.item() * len(idx)
        loss_v, recon_v, kl_v = total / n, total_recon / n, total_kl / n
        line = f"{epoch},{config.learning_rate:.8f},{loss_v:.6f},{recon_v:.6f},{kl_v:.6f}"
        lines.append(line)
        if log_fn is not None:
            log_fn(line)
    return CVAETrainResult(tuple(lines), loss_v, recon_v, kl_v, adam)


def reconstruct(model: CVAE, cond, mode: str = "mean") -> np.ndarray:
    """Reconstruction for one condition or a batch.

    mode 'mean' decodes the prior mean z = 0 (deterministic); 'sample' draws
    z from the prior via the model's generator.  Returns (H, W) float32 for a
    single condition, (B, H, W) for a batch.
    """
    if mode not in ("mean", "sample"):
        raise ValueError(f"mode must be 'mean' or 'sample', got {mode!r}")
    cond_t = torch.as_tensor(np.asarray(cond, dtype=np.float32))
    single = cond_t.ndim == 3
    cond_t = model._check_condition(cond_t)
    b = cond_t.shape[0]
    if mode == "mean":
        z = torch.zeros((b, model.config.latent_dim))
    else:
        z = torch.randn((b, model.config.latent_dim), generator=model.generator)
    with torch.no_grad():
        x_hat = model.decode(z, cond_t)
    out = x_hat.squeeze(1).cpu().numpy().astype(np.float32)
    return out[0] if single else out


def evaluate_cvae(model: CVAE, conditions, targets, *, mode: str = "mean"):
    """MetricReport of reconstructions against targets (mean mode by default)."""
    from .metrics import evaluate_pairs

    cond_all, tgt_all = _paired_tensors(conditions, targets, model.config)
    preds = reconstruct(model, cond_all.numpy(), mode=mode)
    if preds.ndim == 2:
        preds = preds[None]
    return evaluate_pairs(list(preds), list(tgt_all.squeeze(1).numpy()))


def save_cvae(path, model: CVAE, optimizer: Adam | None = None,
              extra_meta: dict | None = None) -> None:
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = dict(extra_meta or {})
    if optimizer is not None:
        for k, v in optimizer.state_tensors().items():
            tensors[k] = v.detach().cpu().numpy()
        meta["optimizer"] = optimizer.state_meta()
    save_container(path, CVAE_MAGIC, model.config.to_dict(), tensors, meta)


def load_cvae(path) -> tuple[CVAE, Adam | None, dict]:
    config, tensors, meta = load_container(path, CVAE_MAGIC)
    model = CVAE(CVAEConfig.from_dict(config))
    state = {k: torch.from_numpy(tensors[k].copy()) for k in model.state_dict().keys()}
    model.load_state_dict(state)
    adam = None
    if "optimizer" in meta:
        adam = Adam(model.parameters(), lr=meta["optimizer"]["lr"])
        adam.load_state(
            {k: torch.from_numpy(v.copy()) for k, v in tensors.items() if k.startswith("adam.")},
            meta["optimizer"],
        )
    return model, adam, meta
