"""Two-phase optimization.

Phase 1 fits the depth path (encoder, decoder, depth head) with an
MSE + a1*(1 - SSIM) objective. Phase 2 freezes that path completely (eval
mode, no gradients) and fits the fusion blocks and both output branches
with MSE + a2*L1 on the amplitude/phase pair. Batch order is drawn from a
fresh generator seeded by (seed, phase, epoch), so a resumed run replays
exactly the schedule the uninterrupted run would have used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from holoforge import checkpoint, metrics
from holoforge.autograd import ops
from holoforge.autograd.tensor import Tensor, backward, no_grad
from holoforge.model import HoloNet


@dataclass(frozen=True)
class LossConfig:
    a1: float = 0.01
    a2: float = 0.01

    def __post_init__(self):
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError(f"loss coefficients must be non-negative, got a1={self.a1}, a2={self.a2}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 4
    learning_rate: float = 1e-4
    seed: int = 42
    phase: str = "both"
    preset: str = "toy"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.phase not in ("1", "2", "both", 1, 2):
            raise ValueError(f"phase must be 1, 2, or 'both', got {self.phase!r}")


class Adam:
    """Bias-corrected adaptive moments over an explicit (name, param) list.

    Moments live in float32 like the parameters, and both are carried in
    checkpoints, so a reloaded optimizer continues the exact trajectory.
    """

    def __init__(self, named_params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.named_params = list(named_params)
        seen = set()
        for name, _ in self.named_params:
            if name in seen:
                raise ValueError(f"duplicate parameter name '{name}'")
            seen.add(name)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self.step_count = 0

    def step(self):
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.named_params:
            if p.grad is None:
                raise ValueError(f"parameter '{name}' has no gradient; run backward first")
            g = p.grad
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += np.asarray((1.0 - self.beta1) * g, dtype=m.dtype)
            v *= self.beta2
            v += np.asarray((1.0 - self.beta2) * (g * g), dtype=v.dtype)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= np.asarray(self.lr * update, dtype=p.data.dtype)

    def zero_grad(self):
        for _, p in self.named_params:
            p.grad = None

    def state_arrays(self) -> dict:
        state = {f"optim.m.{name}": self.m[name] for name, _ in self.named_params}
        state.update({f"optim.v.{name}": self.v[name] for name, _ in self.named_params})
        return state

    def load_state_arrays(self, state: dict, step: int):
        for name, _ in self.named_params:
            for store, key in ((self.m, f"optim.m.{name}"), (self.v, f"optim.v.{name}")):
                if key not in state:
                    raise KeyError(f"optimizer state is missing '{key}'")
                if state[key].shape != store[name].shape:
                    raise ValueError(f"optimizer entry '{key}' has shape {state[key].shape}, "
                                     f"expected {store[name].shape}")
                store[name] = state[key].astype(store[name].dtype, copy=True)
        self.step_count = int(step)


# ---------------------------------------------------------------------------
# losses

def loss_phase1(pred_depth: Tensor, gt_depth: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    """MSE plus a1 times the SSIM dissimilarity (1 - SSIM)."""
    mse = ops.mse_loss(pred_depth, gt_depth)
    dissim = ops.offset(ops.scale(ops.ssim(pred_depth, gt_depth), -1.0), 1.0)
    return ops.add(mse, ops.scale(dissim, cfg.a1))


def loss_phase2(pred_amp: Tensor, pred_phase: Tensor, gt_amp: Tensor, gt_phase: Tensor,
                cfg: LossConfig = LossConfig()) -> Tensor:
    """Summed MSE of both maps plus a2 times their summed L1."""
    mse = ops.add(ops.mse_loss(pred_amp, gt_amp), ops.mse_loss(pred_phase, gt_phase))
    l1 = ops.add(ops.l1_loss(pred_amp, gt_amp), ops.l1_loss(pred_phase, gt_phase))
    return ops.add(mse, ops.scale(l1, cfg.a2))


# ---------------------------------------------------------------------------
# batching

def stack_batch(samples, indices):
    rgb = np.stack([samples[i].rgb for i in indices])
    depth = np.stack([samples[i].depth for i in indices])
    amp = np.stack([samples[i].amplitude for i in indices])
    phase = np.stack([samples[i].phase for i in indices])
    return rgb, depth, amp, phase


def epoch_order(seed: int, phase: int, epoch: int, n: int) -> np.ndarray:
    """Batch order for one epoch, independent of any prior RNG state."""
    return np.random.default_rng([seed, phase, epoch]).permutation(n)


def _new_history(phase: int) -> dict:
    return {"phase": phase, "epoch_loss": [], "step_loss": []}


# ---------------------------------------------------------------------------
# phase loops

def train_phase1(model: HoloNet, samples, cfg: TrainConfig,
                 loss_cfg: LossConfig = LossConfig(), optimizer: Adam | None = None,
                 start_epoch: int = 0, history: dict | None = None, on_epoch=None):
    """Fit the depth path; fusion and branch parameters are never touched.

    Returns (history, optimizer). Pass the optimizer and history from a
    loaded checkpoint together with start_epoch to resume bitwise.
    """
    if not samples:
        raise ValueError("phase 1: training split is empty")
    if optimizer is None:
        optimizer = Adam(model.depth_parameters(), lr=cfg.learning_rate)
    if history is None:
        history = _new_history(1)
    n = len(samples)
    for epoch in range(start_epoch, cfg.epochs):
        model.train()
        order = epoch_order(cfg.seed, 1, epoch, n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            rgb, depth_gt, _, _ = stack_batch(samples, idx)
            model.zero_grad()
            ef = model.encode(Tensor(rgb))
            _, depth = model.decode(ef)
            loss = loss_phase1(depth, Tensor(depth_gt), loss_cfg)
            backward(loss)
            optimizer.step()
            epoch_losses.append(loss.item())
            history["step_loss"].append(loss.item())
        history["epoch_loss"].append(float(np.mean(epoch_losses)))
        if on_epoch is not None:
            on_epoch(epoch, model, optimizer, history)
    return history, optimizer


def train_phase2(model: HoloNet, samples, cfg: TrainConfig,
                 loss_cfg: LossConfig = LossConfig(), optimizer: Adam | None = None,
                 start_epoch: int = 0, history: dict | None = None, on_epoch=None):
    """Fit fusion and output branches against ground-truth hologram pairs.

    The depth path runs in eval mode under no_grad, so its parameters and
    batch-norm statistics stay bitwise identical throughout.
    """
    if not samples:
        raise ValueError("phase 2: training split is empty")
    if optimizer is None:
        optimizer = Adam(model.cgh_parameters(), lr=cfg.learning_rate)
    if history is None:
        history = _new_history(2)
    n = len(samples)
    for epoch in range(start_epoch, cfg.epochs):
        model.train()
        model.encoder.eval()
        model.decoder.eval()
        order = epoch_order(cfg.seed, 2, epoch, n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            rgb, _, amp_gt, phase_gt = stack_batch(samples, idx)
            model.zero_grad()
            rgb_t = Tensor(rgb)
            with no_grad():
                ef = model.encode(rgb_t)
                df, _ = model.decode(ef)
            ef = [t.detach() for t in ef]
            df = [t.detach() for t in df]
            ff = model.fuse(ef, df)
            amp, phase = model.generate_cgh(ff, rgb_t)
            loss = loss_phase2(amp, phase, Tensor(amp_gt), Tensor(phase_gt), loss_cfg)
            backward(loss)
            optimizer.step()
            epoch_losses.append(loss.item())
            history["step_loss"].append(loss.item())
        history["epoch_loss"].append(float(np.mean(epoch_losses)))
        if on_epoch is not None:
            on_epoch(epoch, model, optimizer, history)
    return history, optimizer


# ---------------------------------------------------------------------------
# evaluation

def evaluate(model: HoloNet, samples, split: str = "test") -> dict:
    """Per-sample and mean PSNR/SSIM of predicted amplitude and phase."""
    if not samples:
        raise ValueError(f"split '{split}' is empty")
    model.eval()
    cols = {"psnr_amp": [], "ssim_amp": [], "psnr_phase": [], "ssim_phase": []}
    ids = []
    for s in samples:
        with no_grad():
            out = model.forward(Tensor(s.rgb[None]))
        amp = out.amplitude.data[0, 0]
        phase = out.phase.data[0, 0]
        cols["psnr_amp"].append(metrics.psnr(amp, s.amplitude[0]))
        cols["ssim_amp"].append(metrics.ssim_eval(amp, s.amplitude[0]))
        cols["psnr_phase"].append(metrics.psnr(phase, s.phase[0]))
        cols["ssim_phase"].append(metrics.ssim_eval(phase, s.phase[0]))
        ids.append(s.id)
    report = {"split": split, "n": len(samples), "ids": ids}
    for key, values in cols.items():
        report[key] = {"mean": float(np.mean(values)), "per_sample": [float(v) for v in values]}
    return report


# ---------------------------------------------------------------------------
# checkpoint plumbing

def save_training_checkpoint(path, model: HoloNet, optimizer: Adam | None, *,
                             phase: int, epoch: int, seed: int, extra: dict | None = None):
    arrays = model.state_arrays()
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    meta = {
        "preset": model.config.preset,
        "input_size": model.config.input_size,
        "encoder_channels": list(model.config.encoder_channels),
        "phase": phase,
        "epoch": epoch,
        "seed": seed,
        "step": optimizer.step_count if optimizer is not None else 0,
    }
    if extra:
        meta.update(extra)
    checkpoint.save_checkpoint(path, arrays, meta)


def load_training_checkpoint(path, model: HoloNet, optimizer: Adam | None = None) -> dict:
    """Restore model (and optionally optimizer) state; returns the metadata."""
    arrays, meta = checkpoint.load_checkpoint(path)
    model_state = {k: v for k, v in arrays.items() if not k.startswith("optim.")}
    model.load_state_arrays(model_state)
    if optimizer is not None:
        optim_state = {k: v for k, v in arrays.items() if k.startswith("optim.")}
        optimizer.load_state_arrays(optim_state, step=meta.get("step", 0))
    return meta
