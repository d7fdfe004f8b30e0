"""Hide a news summary's registry id in an image with a learned encoder, and
recover it after print-like distortion to check quoting articles."""

from .autodiff import Tape, Tensor, backward, grad_check
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import (
    Payload,
    SourceKind,
    bit_accuracy,
    ecc_decode,
    ecc_encode,
    payload_to_id,
    payload_to_text,
    text_id,
    text_to_payload,
)
from .corruption import PRESETS, CorruptionSpec, apply_corruption, get_preset, sample_homography
from .errors import StegoError
from .evaluate import EvalReport, evaluate, percentiles, write_report
from .losses import l2_residual, message_loss, perceptual_proxy, total_loss
from .net import MessageBits, NetConfig, StegoParams, decode, encode, init_params
from .optim import AdamState, adam_step
from .train import TrainConfig, lambda_schedule, train
from .verify import Registry, Status, Verdict, registry_get, registry_put, summarize_extractive, verify

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CorruptionSpec", "EvalReport", "MessageBits", "NetConfig", "PRESETS", "Payload",
    "Registry", "SourceKind", "Status", "StegoError", "StegoParams", "Tape", "Tensor", "TrainConfig",
    "Verdict", "adam_step", "apply_corruption", "backward", "bit_accuracy", "decode", "ecc_decode",
    "ecc_encode", "encode", "evaluate", "get_preset", "grad_check", "init_params", "l2_residual",
    "lambda_schedule", "load_checkpoint", "message_loss", "payload_to_id", "payload_to_text",
    "percentiles", "perceptual_proxy", "registry_get", "registry_put", "sample_homography",
    "save_checkpoint", "summarize_extractive", "text_id", "text_to_payload", "total_loss", "train",
    "verify", "write_report",
]
