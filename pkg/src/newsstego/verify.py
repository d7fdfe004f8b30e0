"""Source-summary workflow: summarise an article, register the summary under
its 64-bit id, hide the id in an image, and later check quoting text against
the summary recovered from the image."""
from __future__ import annotations

import datetime as _dt
import enum
import fcntl
import json
import re
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .autodiff import Tensor
from .codec import decode_payload_bits, id_to_payload, payload_to_id, text_id
from .errors import EmptyText, IdCollision, IoFailure, UnreadableImage
from .images import load_image
from .net import StegoParams, decode_logits, encode, logits_to_bits

DEFAULT_THRESHOLD = 0.5
DEFAULT_MAX_SENTENCES = 3
# A block is "inconsistent" when re-encoding its decoded nibble differs from
# the received block in more than this many bits. Hamming(7,4) is a perfect
# code, so that distance is never above 1; any correction counts.
BLOCK_TOLERANCE = 0
FAILED_BLOCK_FRACTION = 0.25

_SENTENCE = re.compile(r"[^.!?]*[.!?]+|[^.!?]+$")
_TOKEN = re.compile(r"[a-z]+")


# --------------------------------------------------------------------------
# summarisation


def split_sentences(text: str) -> List[str]:
    return [s.strip() for s in _SENTENCE.findall(text) if s.strip()]


def tokens(text: str) -> List[str]:
    return _TOKEN.findall(text.lower())


def summarize_extractive(text: str, max_sentences: int = DEFAULT_MAX_SENTENCES) -> str:
    """Pick the ``max_sentences`` sentences whose tokens are, on average, most
    frequent in ``text``; keep them in their original order.

    Ties go to the earlier sentence. Sentences without alphabetic tokens
    score zero.
    """
    if max_sentences < 1:
        raise ValueError("max_sentences must be >= 1")
    sentences = split_sentences(text or "")
    if not sentences:
        raise EmptyText("nothing to summarise")
    freq = Counter(tokens(text))
    scores = []
    for i, s in enumerate(sentences):
        toks = tokens(s)
        scores.append((sum(freq[t] for t in toks) / len(toks)) if toks else 0.0)
    order = sorted(range(len(sentences)), key=lambda i: (-scores[i], i))
    chosen = sorted(order[:max_sentences])
    return " ".join(sentences[i] for i in chosen)


def jaccard(a: str, b: str) -> float:
    """Token-set Jaccard similarity; two token-free strings count as equal."""
    x, y = set(tokens(a)), set(tokens(b))
    if not x and not y:
        return 1.0
    return len(x & y) / len(x | y)


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class RegistryEntry:
    id: int
    summary: str
    source_ref: str
    created_at: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=True)


class Registry:
    """Append-only JSON-lines store of :class:`RegistryEntry` keyed by id.

    Writers take an exclusive ``flock`` on the file; readers parse whatever
    complete lines exist, so they always see a consistent prefix.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._entries: Dict[int, RegistryEntry] = {}
        self.reload()

    def reload(self) -> None:
        self._entries = {}
        if not self.path.exists():
            return
        try:
            raw = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read registry {self.path}: {exc}") from exc
        for line in raw.split("\n"):
            if not line.strip():
                continue
            try:
                entry = RegistryEntry(**json.loads(line))
            except (ValueError, TypeError):
                # torn final line from an interrupted writer
                continue
            self._entries.setdefault(int(entry.id), entry)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.values())

    def get(self, ident: int) -> Optional[RegistryEntry]:
        return self._entries.get(int(ident))

    def find_low_bits(self, value: int, nbits: int) -> List[RegistryEntry]:
        """Entries whose id agrees with ``value`` in the low ``nbits`` bits,
        oldest first."""
        mask = (1 << nbits) - 1
        return [e for e in self._entries.values() if e.id & mask == value & mask]

    def put(self, summary: str, source_ref: str = "") -> RegistryEntry:
        if not summary:
            raise EmptyText("cannot register an empty summary")
        ident = text_id(summary)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a+", encoding="utf-8") as fh:
                fcntl.flock(fh, fcntl.LOCK_EX)
                try:
                    self.reload()  # pick up other writers' entries under the lock
                    existing = self._entries.get(ident)
                    if existing is not None:
                        if existing.summary != summary:
                            raise IdCollision(f"id {ident:016x} already holds a different summary")
                        return existing
                    entry = RegistryEntry(
                        id=ident,
                        summary=summary,
                        source_ref=source_ref,
                        created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
                    )
                    fh.seek(0, 2)
                    fh.write(entry.to_json() + "\n")
                    fh.flush()
                    self._entries[ident] = entry
                    return entry
                finally:
                    fcntl.flock(fh, fcntl.LOCK_UN)
        except OSError as exc:
            raise IoFailure(f"cannot write registry {self.path}: {exc}") from exc


def registry_put(store: Registry, summary: str, source_ref: str = "") -> RegistryEntry:
    return store.put(summary, source_ref)


def registry_get(store: Registry, ident: int) -> Optional[RegistryEntry]:
    return store.get(ident)


# --------------------------------------------------------------------------
# embedding and verification


class Status(str, enum.Enum):
    MATCH = "Match"
    MISMATCH = "Mismatch"
    NO_RECORD = "NoRecord"
    DECODE_FAILED = "DecodeFailed"


EXIT_CODES = {Status.MATCH: 0, Status.MISMATCH: 2, Status.NO_RECORD: 3, Status.DECODE_FAILED: 4}


@dataclass(frozen=True)
class Verdict:
    status: Status
    decoded_summary: Optional[str] = None
    similarity: Optional[float] = None
    entry: Optional[RegistryEntry] = None

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]


def embed_summary(cover: np.ndarray, summary: str, params: StegoParams, store: Registry,
                  source_ref: str = "") -> Tuple[np.ndarray, RegistryEntry]:
    """Register ``summary`` and hide its id in ``cover`` (3, H, H).

    Returns (stego image (3, H, H), registry entry).
    """
    entry = store.put(summary, source_ref)
    payload = id_to_payload(entry.id, params.payload_bits)
    cover = np.asarray(cover, dtype=np.float64)[None]
    return encode(Tensor(cover), payload.raw_bits.bits[None], params).data[0], entry


def read_bits(image: np.ndarray, params: StegoParams) -> np.ndarray:
    logits = decode_logits(Tensor(np.asarray(image, dtype=np.float64)[None]), params).data
    return logits_to_bits(logits)[0]


def payload_failed(bits) -> bool:
    """True when too many Hamming blocks look inconsistent to trust the read."""
    _, _, inconsistency = decode_payload_bits(bits)
    if inconsistency.size == 0:
        return True
    return float(np.mean(inconsistency > BLOCK_TOLERANCE)) > FAILED_BLOCK_FRACTION


def verify_bits(bits, store: Registry, claimed_text: Optional[str] = None,
                threshold: float = DEFAULT_THRESHOLD,
                max_sentences: int = DEFAULT_MAX_SENTENCES) -> Verdict:
    if payload_failed(bits):
        return Verdict(Status.DECODE_FAILED)
    value, nbits = payload_to_id(bits)
    candidates = store.find_low_bits(value, nbits)
    if not candidates:
        return Verdict(Status.NO_RECORD)
    if claimed_text is None:
        entry = candidates[0]
        return Verdict(Status.MATCH, entry.summary, None, entry)
    claimed_summary = summarize_extractive(claimed_text, max_sentences)
    # with truncated ids several entries can share the carried bits; keep the
    # best-matching one
    scored = [(jaccard(e.summary, claimed_summary), k, e) for k, e in enumerate(candidates)]
    sim, _, entry = max(scored, key=lambda s: (s[0], -s[1]))
    status = Status.MATCH if sim >= threshold else Status.MISMATCH
    return Verdict(status, entry.summary, sim, entry)


def verify(stego_image, claimed_text: Optional[str], params: StegoParams, store: Registry,
           threshold: float = DEFAULT_THRESHOLD, max_sentences: int = DEFAULT_MAX_SENTENCES) -> Verdict:
    """Decode the id hidden in ``stego_image`` (array or path) and check it
    against the registry and, if given, the claimed article text."""
    if isinstance(stego_image, (str, Path)):
        image = load_image(stego_image, params.image_size)
    else:
        image = np.asarray(stego_image, dtype=np.float64)
        if image.ndim == 4:
            image = image[0]
        if image.shape != (3, params.image_size, params.image_size) or not np.all(np.isfinite(image)):
            raise UnreadableImage(f"image array of shape {image.shape} is not a 3x{params.image_size}^2 image")
    return verify_bits(read_bits(image, params), store, claimed_text, threshold, max_sentences)


__all__ = [
    "DEFAULT_THRESHOLD", "Registry", "RegistryEntry", "Status", "Verdict",
    "embed_summary", "jaccard", "payload_failed", "read_bits", "registry_get", "registry_put",
    "split_sentences", "summarize_extractive", "tokens", "verify", "verify_bits",
]
