"""Training loop: encoder -> corruption channel -> decoder under the
scheduled weighted loss."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .autodiff import Tape, Tensor
from .checkpoint import save_checkpoint
from .corruption import apply_corruption, get_preset, scaled
from .errors import DivergedLoss, EmptyDataset, InvalidConfig
from .losses import total_loss
from .net import NetConfig, StegoParams, decode_logits, encode, init_params, logits_to_bits
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

LOG_HEADER = ("step", "lambda_r", "lambda_p", "lambda_m", "loss_r", "loss_p", "loss_m", "loss_total", "bit_acc")
DIVERGENCE_LIMIT = 1e4


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20_000
    batch_size: int = 4
    lambda_targets: Tuple[float, float, float] = (1.5, 1.0, 1.0)
    ramp_start: int = 1_500
    ramp_end: int = 5_000
    corruption: str = "print-sim"
    # corruption strength grows linearly from 0 to 1 over these steps
    corruption_ramp: Tuple[int, int] = (0, 0)
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    checkpoint_interval: int = 0
    checkpoint_path: Optional[str] = None
    net: NetConfig = field(default_factory=NetConfig)

    def validate(self) -> "TrainConfig":
        if self.steps < 0 or self.batch_size < 1:
            raise InvalidConfig("steps must be >= 0 and batch_size >= 1")
        if not 0 <= self.ramp_start <= self.ramp_end <= self.steps:
            raise InvalidConfig("need ramp_start <= ramp_end <= steps")
        if any(v < 0 for v in self.lambda_targets) or self.lambda_targets[2] <= 0:
            raise InvalidConfig("lambda targets must be >= 0 with lambda_m > 0")
        get_preset(self.corruption)
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["net"] = self.net.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "net" in d:
            d["net"] = NetConfig.from_dict(d["net"])
        for key in ("lambda_targets", "corruption_ramp"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8"))).validate()

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def lambda_schedule(step: int, config: TrainConfig) -> Tuple[float, float, float]:
    """(lambda_r, lambda_p, lambda_m) at ``step``.

    The image-quality weights stay at zero until ``ramp_start`` and rise
    linearly to their targets at ``ramp_end``; the message weight is constant.
    """
    lam_r, lam_p, lam_m = config.lambda_targets
    if step < config.ramp_start:
        frac = 0.0
    elif step >= config.ramp_end:
        frac = 1.0
    else:
        frac = (step - config.ramp_start) / (config.ramp_end - config.ramp_start)
    return lam_r * frac, lam_p * frac, lam_m


def corruption_strength(step: int, config: TrainConfig) -> float:
    start, end = config.corruption_ramp
    if step >= end:
        return 1.0
    if step < start:
        return 0.0
    return (step - start) / (end - start)


def step_seed(seed: int, step: int) -> np.random.SeedSequence:
    """Per-step seed material; a pure function of (seed, step)."""
    return np.random.SeedSequence([int(seed) % 2**63, int(step)])


@dataclass
class TrainResult:
    params: StegoParams
    log: List[Dict[str, float]]


def train_step(
    params: StegoParams,
    state: AdamState,
    covers: np.ndarray,
    bits: np.ndarray,
    lambdas: Tuple[float, float, float],
    corruption_spec,
    rng: np.random.Generator,
) -> Dict[str, float]:
    weights = params.trainable()
    cover_t = Tensor(covers)
    with Tape() as tape:
        stego = encode(cover_t, bits, params)
        received = apply_corruption(stego, corruption_spec, rng, differentiable=True)
        logits = decode_logits(received, params)
        loss, parts = total_loss(cover_t, stego, logits, bits, lambdas, with_parts=True)
    value = loss.item()
    if not np.isfinite(value) or abs(value) > DIVERGENCE_LIMIT:
        tape.reset()
        raise DivergedLoss(f"loss {value}")
    grads = tape.backward(loss, wrt=list(weights.values()))
    adam_step(weights, {name: grads[t] for name, t in weights.items()}, state)
    parts["loss_total"] = value
    parts["bit_acc"] = float(np.mean(logits_to_bits(logits.data) == bits))
    return parts


def train(
    dataset: np.ndarray,
    config: TrainConfig,
    params: Optional[StegoParams] = None,
    log_path: Optional[Union[str, Path]] = None,
    progress_every: int = 0,
) -> TrainResult:
    """Run ``config.steps`` optimisation steps over ``dataset`` (N, 3, H, H).

    Each step draws a batch of covers and fresh random payloads from a
    generator seeded by (seed, step), so runs are reproducible bit for bit.
    On divergence the last periodic checkpoint (if any) is left in place and
    :class:`DivergedLoss` propagates.
    """
    config.validate()
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 4 or data.shape[0] == 0:
        raise EmptyDataset("training needs a non-empty (N, 3, H, H) image array")
    h = config.net.image_size
    if data.shape[1:] != (3, h, h):
        raise InvalidConfig(f"dataset images are {data.shape[1:]}, network expects (3, {h}, {h})")
    if params is None:
        params = init_params(config.net, config.seed)
    state = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    preset = get_preset(config.corruption)
    rows: List[Dict[str, float]] = []
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
    t0 = time.perf_counter()
    try:
        for step in range(config.steps):
            rng = np.random.default_rng(step_seed(config.seed, step))
            idx = rng.integers(0, data.shape[0], size=config.batch_size)
            covers = data[idx]
            bits = rng.integers(0, 2, size=(config.batch_size, config.net.payload_bits))
            lambdas = lambda_schedule(step, config)
            spec = scaled(preset, corruption_strength(step, config))
            parts = train_step(params, state, covers, bits, lambdas, spec, rng)
            row = {"step": step, "lambda_r": lambdas[0], "lambda_p": lambdas[1], "lambda_m": lambdas[2]}
            row.update(parts)
            rows.append(row)
            if writer is not None:
                writer.writerow([_fmt(row[k]) for k in LOG_HEADER])
            if progress_every and (step + 1) % progress_every == 0:
                recent = rows[-progress_every:]
                log.info(
                    "step %d  loss_m %.4f  bit_acc %.4f  loss_r %.5f  (%.1fs)",
                    step + 1,
                    np.mean([r["loss_m"] for r in recent]),
                    np.mean([r["bit_acc"] for r in recent]),
                    np.mean([r["loss_r"] for r in recent]),
                    time.perf_counter() - t0,
                )
            if (
                config.checkpoint_interval
                and config.checkpoint_path
                and (step + 1) % config.checkpoint_interval == 0
            ):
                save_checkpoint(params, config.checkpoint_path)
    finally:
        if fh is not None:
            fh.close()
    for t in params.weights.values():
        t.requires_grad = False
        t.grad = None
    return TrainResult(params, rows)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


def read_log(path: Union[str, Path]) -> List[Dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
