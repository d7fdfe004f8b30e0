"""Bit-accuracy evaluation across corruption suites, with nearest-rank
percentile summaries in the layout of a robustness table."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .autodiff import Tensor
from .codec import bit_accuracy, data_capacity, decode_payload_bits
from .corruption import CorruptionSpec, apply_corruption
from .errors import EmptyDataset, EmptyInput, IoFailure
from .net import StegoParams, decode_logits, encode, logits_to_bits, resize_matrix

RANKS = (5, 25, 50)
RECORD_HEADER = ("suite", "image_id", "payload_id", "bit_accuracy", "ecc_corrected", "ecc_ok", "psnr")
SUMMARY_HEADER = ("suite", "p5", "p25", "p50", "mean")


def percentiles(values: Sequence[float], ranks: Sequence[float] = RANKS) -> List[float]:
    """Nearest-rank percentiles: sort ascending, take the ceil(r/100 * n)-th
    value (1-based, at least the first)."""
    v = sorted(float(x) for x in values)
    if not v:
        raise EmptyInput("percentiles of an empty sequence")
    n = len(v)
    return [v[max(1, math.ceil(r / 100.0 * n)) - 1] for r in ranks]


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))
    return float("inf") if mse == 0 else 10.0 * math.log10(1.0 / mse)


@dataclass
class EvalRecord:
    image_id: int
    payload_id: int
    bit_accuracy: float
    ecc_corrected: int
    ecc_ok: bool
    psnr: float


@dataclass
class EvalReport:
    suite: str
    records: List[EvalRecord]
    config: Dict[str, object] = field(default_factory=dict)

    @property
    def accuracies(self) -> List[float]:
        return [r.bit_accuracy for r in self.records]

    @property
    def aggregates(self) -> Dict[str, float]:
        p5, p25, p50 = percentiles(self.accuracies)
        return {"p5": p5, "p25": p25, "p50": p50, "mean": float(np.mean(self.accuracies))}

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r.psnr for r in self.records]))

    @property
    def ecc_success_rate(self) -> float:
        return float(np.mean([r.ecc_ok for r in self.records]))


def random_payload(rng: np.random.Generator, length: int) -> tuple:
    """(raw bits, data bits): random data wrapped in the Hamming code."""
    from .codec import _wrap

    data = rng.integers(0, 2, size=data_capacity(length)).astype(np.uint8)
    return _wrap(data, length).bits, data


def resolution_roundtrip(image: np.ndarray, resolution: int) -> np.ndarray:
    """Resize (N,3,H,H) to resolution^2 and back to H^2."""
    h = image.shape[-1]
    up, down = resize_matrix(h, resolution), resize_matrix(resolution, h)
    return down @ (up @ image @ up.T) @ down.T


def evaluate(
    params: StegoParams,
    images: np.ndarray,
    suites: Sequence[CorruptionSpec],
    n_payloads_per_image: int = 1,
    seed: int = 0,
    resolutions: Optional[Sequence[int]] = None,
    batch_size: int = 16,
) -> List[EvalReport]:
    """Embed random ECC-coded payloads, push the stego images through each
    suite (no gradients), decode, and record raw pre-ECC bit accuracy.

    With ``resolutions``, each record also goes through a resize to a
    resolution drawn from that list and back before decoding.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] == 0:
        raise EmptyDataset("evaluation needs at least one image")
    if not params.all_finite():
        raise ValueError("parameters contain NaN/Inf")
    L = params.payload_bits
    n_img = images.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    jobs = []  # (image id, payload id, raw bits, data bits)
    for i in range(n_img):
        for k in range(n_payloads_per_image):
            raw, data = random_payload(rng, L)
            jobs.append((i, k, raw, data))

    stegos = np.empty((len(jobs),) + images.shape[1:])
    for start in range(0, len(jobs), batch_size):
        chunk = jobs[start:start + batch_size]
        covers = images[[j[0] for j in chunk]]
        bits = np.stack([j[2] for j in chunk])
        stegos[start:start + len(chunk)] = encode(Tensor(covers), bits, params).data

    reports = []
    for s_idx, spec in enumerate(suites):
        srng = np.random.default_rng(np.random.SeedSequence([int(seed), 1, s_idx]))
        records = []
        for start in range(0, len(jobs), batch_size):
            chunk = jobs[start:start + batch_size]
            x = apply_corruption(Tensor(stegos[start:start + len(chunk)]), spec, srng, differentiable=False).data
            if resolutions:
                res = srng.choice(np.asarray(resolutions), size=len(chunk))
                x = np.stack([resolution_roundtrip(x[m:m + 1], int(r))[0] for m, r in enumerate(res)])
            logits = decode_logits(Tensor(x), params).data
            got = logits_to_bits(logits)
            for m, (i, k, raw, data) in enumerate(chunk):
                dec, corrected, _ = decode_payload_bits(got[m])
                records.append(EvalRecord(
                    image_id=i,
                    payload_id=k,
                    bit_accuracy=bit_accuracy(got[m], raw),
                    ecc_corrected=int(corrected),
                    ecc_ok=bool(np.array_equal(dec, data)),
                    psnr=psnr(images[i], stegos[start + m]),
                ))
        records.sort(key=lambda r: (r.image_id, r.payload_id))
        reports.append(EvalReport(
            suite=spec.name,
            records=records,
            config={"H": params.image_size, "L": L, "seed": seed, "spec": spec.to_text().strip().replace("\n", "; ")},
        ))
    return reports


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def format_table(reports: Sequence[EvalReport]) -> str:
    lines = [f"{'Suite':<12} {'5th':>8} {'25th':>8} {'50th':>8} {'Mean':>8}"]
    lines.append("-" * len(lines[0]))
    for r in reports:
        a = r.aggregates
        lines.append(
            f"{r.suite:<12} {a['p5']:>8.2%} {a['p25']:>8.2%} {a['p50']:>8.2%} {a['mean']:>8.2%}"
        )
    return "\n".join(lines)


def write_report(reports: Sequence[EvalReport], path: Union[str, Path]) -> Dict[str, Path]:
    """Write ``<path>/records.csv``, ``<path>/summary.csv`` and
    ``<path>/table.txt``. Returns the three paths."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        records_path, summary_path, table_path = out / "records.csv", out / "summary.csv", out / "table.txt"
        with open(records_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RECORD_HEADER)
            for rep in reports:
                for r in rep.records:
                    w.writerow([rep.suite, r.image_id, r.payload_id, _fmt(r.bit_accuracy),
                                r.ecc_corrected, int(r.ecc_ok), _fmt(r.psnr)])
        with open(summary_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            for rep in reports:
                a = rep.aggregates
                w.writerow([rep.suite] + [_fmt(a[k]) for k in SUMMARY_HEADER[1:]])
        table_path.write_text(format_table(reports) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out}: {exc}") from exc
    return {"records": records_path, "summary": summary_path, "table": table_path}


def read_summary(path: Union[str, Path]) -> Dict[str, Dict[str, float]]:
    with open(path, newline="") as fh:
        return {row["suite"]: {k: float(row[k]) for k in SUMMARY_HEADER[1:]} for row in csv.DictReader(fh)}
