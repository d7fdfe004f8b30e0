import multiprocessing as mp
from collections import Counter

import numpy as np
import pytest

import importlib
from newsstego.codec import id_to_payload, text_id
from newsstego.errors import EmptyText, IdCollision, UnreadableImage
from newsstego.net import NetConfig, init_params
from newsstego.verify import (
    EXIT_CODES,
    Registry,
    Status,
    embed_summary,
    jaccard,
    payload_failed,
    registry_get,
    registry_put,
    split_sentences,
    summarize_extractive,
    verify,
    verify_bits,
)

vf = importlib.import_module("newsstego.verify")

ARTICLE = (
    "The river flooded the town on Monday. Officials said the river rose two metres overnight. "
    "A bakery stayed open. Residents near the river were moved to the school. "
    "Rain is expected again on Friday."
)


def summary_oracle(text, k):
    sents = [s.strip() for s in text.replace("!", ".").replace("?", ".").split(".") if s.strip()]
    words = lambda s: "".join(c if c.isalpha() else " " for c in s.lower()).split()
    tf = Counter(words(text))
    score = [sum(tf[w] for w in words(s)) / max(1, len(words(s))) for s in sents]
    keep = sorted(sorted(range(len(sents)), key=lambda i: (-score[i], i))[:k])
    return keep


def test_summarizer_agrees_with_oracle():
    sents = split_sentences(ARTICLE)
    assert len(sents) == 5
    for k in (1, 2, 3, 5, 9):
        want = " ".join(sents[i] for i in summary_oracle(ARTICLE, k))
        assert summarize_extractive(ARTICLE, k) == want
    assert summarize_extractive("One line without a stop") == "One line without a stop"
    with pytest.raises(EmptyText):
        summarize_extractive("   ")
    with pytest.raises(ValueError):
        summarize_extractive(ARTICLE, 0)


def test_summarizer_is_deterministic_and_ordered():
    s = summarize_extractive(ARTICLE, 2)
    assert s == summarize_extractive(ARTICLE, 2)
    sents = split_sentences(ARTICLE)
    idx = [sents.index(x) for x in split_sentences(s)]
    assert idx == sorted(idx)


def test_jaccard():
    assert jaccard("a b c", "c b a") == 1.0
    assert jaccard("a b", "c d") == 0.0
    assert jaccard("a b c", "b c d") == 0.5
    assert jaccard("...", "") == 1.0


def test_registry_persists_and_is_idempotent(tmp_path):
    path = tmp_path / "reg.jsonl"
    store = Registry(path)
    e = registry_put(store, "A summary.", "src-1")
    assert e.id == text_id("A summary.")
    assert registry_put(store, "A summary.", "src-2") == e
    again = Registry(path)
    assert len(again) == 1 and registry_get(again, e.id) == e
    assert registry_get(again, 12345) is None
    with pytest.raises(EmptyText):
        store.put("")


def test_registry_skips_torn_line(tmp_path):
    path = tmp_path / "reg.jsonl"
    store = Registry(path)
    e = store.put("kept")
    with open(path, "a") as fh:
        fh.write('{"id": 1, "summ')
    assert list(Registry(path)) == [e]


def test_id_collision(tmp_path, monkeypatch):
    monkeypatch.setattr(vf, "text_id", lambda text: 42)
    store = Registry(tmp_path / "reg.jsonl")
    store.put("first")
    with pytest.raises(IdCollision):
        store.put("second")


def _writer(path, k):
    store = Registry(path)
    for i in range(20):
        store.put(f"writer {k} entry {i}")


def test_concurrent_writers(tmp_path):
    path = tmp_path / "reg.jsonl"
    procs = [mp.get_context("fork").Process(target=_writer, args=(path, k)) for k in range(3)]
    for p in procs:
        p.start()
    for p in procs:
        p.join()
    assert len(Registry(path)) == 60
    assert len(path.read_text().splitlines()) == 60


def test_payload_failure_rule():
    bits = id_to_payload(text_id("x"), 32).raw_bits.bits.copy()
    assert not payload_failed(bits)
    bits[0] ^= 1
    assert not payload_failed(bits)  # one corrected block out of four
    bits[7] ^= 1
    assert payload_failed(bits)


def test_verdicts_from_bits(tmp_path):
    store = Registry(tmp_path / "reg.jsonl")
    summary = summarize_extractive(ARTICLE)
    entry = store.put(summary, "article-1")
    bits = id_to_payload(entry.id, 32).raw_bits.bits

    v = verify_bits(bits, store, ARTICLE)
    assert v.status is Status.MATCH and v.similarity == 1.0 and v.entry == entry and v.exit_code == 0
    v = verify_bits(bits, store, "Completely unrelated words about a football game.")
    assert v.status is Status.MISMATCH and v.similarity < 0.5 and v.exit_code == 2
    v = verify_bits(bits, store, None)
    assert v.status is Status.MATCH and v.similarity is None

    other = id_to_payload(entry.id ^ 0xFFFF, 32).raw_bits.bits
    v = verify_bits(other, store, ARTICLE)
    assert v.status is Status.NO_RECORD and v.exit_code == 3

    broken = bits.copy()
    broken[[1, 8, 15]] ^= 1
    v = verify_bits(broken, store, ARTICLE)
    assert v.status is Status.DECODE_FAILED and v.exit_code == 4
    assert EXIT_CODES == {Status.MATCH: 0, Status.MISMATCH: 2, Status.NO_RECORD: 3, Status.DECODE_FAILED: 4}


def test_truncated_id_prefers_best_candidate(tmp_path, monkeypatch):
    store = Registry(tmp_path / "reg.jsonl")
    ids = iter([0x10000 | 7, 0x20000 | 7])
    monkeypatch.setattr(vf, "text_id", lambda text: next(ids))
    store.put("cats sleep all day")
    store.put("the river flooded the town")
    bits = id_to_payload(7, 32).raw_bits.bits
    v = verify_bits(bits, store, "The river flooded the town.")
    assert v.status is Status.MATCH and v.decoded_summary == "the river flooded the town"


def test_embed_and_verify_on_untrained_net(tmp_path):
    params = init_params(NetConfig(widths=(2, 4, 4), decoder_widths=(2, 4, 4), loc_widths=(2, 2)), 0)
    store = Registry(tmp_path / "reg.jsonl")
    cover = np.full((3, 64, 64), 0.5)
    stego, entry = embed_summary(cover, "Short summary.", params, store)
    assert stego.shape == cover.shape and 0 <= stego.min() and stego.max() <= 1
    assert store.get(entry.id) == entry
    v = verify(stego, "Short summary.", params, store)
    assert v.status in set(Status)
    with pytest.raises(UnreadableImage):
        verify(np.zeros((3, 32, 32)), None, params, store)
    with pytest.raises(UnreadableImage):
        verify(np.full((3, 64, 64), np.nan), None, params, store)
    with pytest.raises(UnreadableImage):
        verify(tmp_path / "missing.png", None, params, store)
