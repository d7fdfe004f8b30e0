from pathlib import Path

import numpy as np
import pytest

from newsstego.errors import DivergedLoss, EmptyDataset, InvalidConfig
from newsstego.images import synthetic_corpus
from newsstego.net import NetConfig, init_params
from newsstego.checkpoint import to_bytes
from newsstego.train import LOG_HEADER, TrainConfig, corruption_strength, lambda_schedule, read_log, train

TINY_NET = NetConfig(widths=(2, 4, 4), decoder_widths=(2, 4, 4), loc_widths=(2, 2))


def tiny(steps=6, **kw):
    return TrainConfig(steps=steps, batch_size=2, ramp_start=0, ramp_end=steps, net=TINY_NET, **kw)


@pytest.fixture(scope="module")
def data():
    return synthetic_corpus(4, 64, seed=30)


def test_lambda_schedule_endpoints():
    cfg = TrainConfig()
    lam = cfg.lambda_targets
    assert lambda_schedule(0, cfg) == (0, 0, lam[2])
    assert lambda_schedule(cfg.ramp_start - 1, cfg) == (0, 0, lam[2])
    mid = (cfg.ramp_start + cfg.ramp_end) // 2
    r, p, m = lambda_schedule(mid, cfg)
    frac = (mid - cfg.ramp_start) / (cfg.ramp_end - cfg.ramp_start)
    assert abs(r - lam[0] * frac) < 1e-12 and abs(p - lam[1] * frac) < 1e-12 and m == lam[2]
    assert lambda_schedule(cfg.ramp_end, cfg) == lam
    assert lambda_schedule(cfg.steps, cfg) == lam


def test_lambda_schedule_is_monotone():
    cfg = TrainConfig()
    prev = lambda_schedule(0, cfg)
    for step in range(0, cfg.steps, 97):
        cur = lambda_schedule(step, cfg)
        assert cur[0] >= prev[0] and cur[1] >= prev[1] and cur[2] == prev[2]
        prev = cur


def test_corruption_strength_ramp():
    cfg = TrainConfig(corruption_ramp=(100, 300))
    assert corruption_strength(0, cfg) == 0.0
    assert corruption_strength(200, cfg) == 0.5
    assert corruption_strength(300, cfg) == 1.0
    assert corruption_strength(10, TrainConfig()) == 1.0


def test_config_validation_and_json(tmp_path):
    with pytest.raises(InvalidConfig):
        TrainConfig(steps=10, ramp_start=5, ramp_end=20).validate()
    with pytest.raises(InvalidConfig):
        TrainConfig(lambda_targets=(1, 1, 0)).validate()
    with pytest.raises(InvalidConfig):
        TrainConfig(corruption="fax").validate()
    cfg = tiny(corruption_ramp=(1, 3))
    cfg.save(tmp_path / "c.json")
    assert TrainConfig.load(tmp_path / "c.json") == cfg


def test_zero_steps_returns_initial_params(data):
    result = train(data, tiny(steps=0))
    init = init_params(TINY_NET, 0)
    assert result.log == []
    assert to_bytes(result.params) == to_bytes(init)


def test_bad_dataset(data):
    with pytest.raises(EmptyDataset):
        train(np.zeros((0, 3, 64, 64)), tiny())
    with pytest.raises(InvalidConfig):
        train(synthetic_corpus(2, 32, seed=0), tiny())


def test_training_is_deterministic_and_logs(data, tmp_path):
    before = data.copy()
    a = train(data, tiny(), log_path=tmp_path / "a.csv")
    b = train(data, tiny(), log_path=tmp_path / "b.csv")
    assert np.array_equal(data, before)
    assert to_bytes(a.params) == to_bytes(b.params)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = read_log(tmp_path / "a.csv")
    assert len(rows) == 6 and tuple(rows[0]) == LOG_HEADER
    assert [r["step"] for r in rows] == list(range(6))
    assert to_bytes(a.params) != to_bytes(train(data, tiny(seed=1)).params)


def test_periodic_checkpoint(data, tmp_path):
    path = tmp_path / "ck.bin"
    res = train(data, tiny(steps=4, checkpoint_interval=2, checkpoint_path=str(path)))
    assert path.read_bytes() == to_bytes(res.params)


def test_divergence_is_reported(data):
    with pytest.raises(DivergedLoss):
        train(data, tiny(steps=3, lr=1e12, lambda_targets=(1e6, 1e6, 1.0)))


def test_message_loss_falls_over_first_2000_steps():
    # desk-scale corpus and network, image terms held at zero throughout
    base = TrainConfig.load(Path(__file__).resolve().parents[1] / "configs" / "desk.json")
    cfg = TrainConfig.from_dict({**base.to_dict(), "steps": 2000, "ramp_start": 2000, "ramp_end": 2000,
                                 "lambda_targets": (0.0, 0.0, 1.0)})
    log = train(synthetic_corpus(64, 64, seed=1), cfg).log
    assert all(r["lambda_r"] == 0 and r["lambda_p"] == 0 for r in log)
    windows = [np.mean([r["loss_m"] for r in log[i:i + 100]]) for i in range(0, 2000, 100)]
    assert windows[-1] < windows[0]
    # after the initial plateau every later window sits below the first one
    assert max(windows[10:]) < windows[0]
