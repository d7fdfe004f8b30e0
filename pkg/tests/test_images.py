import numpy as np
import pytest

from newsstego.errors import EmptyDataset, UnreadableImage
from newsstego.images import load_dataset, load_image, save_png, synthetic_corpus, to_uint8, write_corpus


def test_png_round_trip_is_within_quantisation(tmp_path):
    img = synthetic_corpus(1, 32, seed=0)[0]
    save_png(img, tmp_path / "a.png")
    back = load_image(tmp_path / "a.png")
    assert back.shape == (3, 32, 32)
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12
    assert np.array_equal(to_uint8(back), to_uint8(img))


def test_resize_on_load(tmp_path):
    save_png(np.zeros((3, 20, 30)), tmp_path / "r.png")
    assert load_image(tmp_path / "r.png", 64).shape == (3, 64, 64)


def test_corpus_is_deterministic(tmp_path):
    a, b = synthetic_corpus(3, 64, seed=1), synthetic_corpus(3, 64, seed=1)
    assert a.tobytes() == b.tobytes() and a.min() >= 0 and a.max() <= 1
    assert not np.array_equal(a, synthetic_corpus(3, 64, seed=2))
    paths = write_corpus(tmp_path / "c", 3, 64, seed=1)
    assert [p.name for p in paths] == ["img_0000.png", "img_0001.png", "img_0002.png"]
    assert load_dataset(tmp_path / "c", 64).shape == (3, 3, 64, 64)


def test_errors(tmp_path):
    (tmp_path / "junk.png").write_bytes(b"not a png")
    with pytest.raises(UnreadableImage):
        load_image(tmp_path / "junk.png")
    with pytest.raises(EmptyDataset):
        load_dataset(tmp_path / "missing", 64)
    (tmp_path / "empty").mkdir()
    with pytest.raises(EmptyDataset):
        load_dataset(tmp_path / "empty", 64)
