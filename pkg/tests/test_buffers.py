import numpy as np
import pytest

from demonav.buffers import NotEnoughBuffers, ReplayBank
from demonav.rng import stream

OBS_DIM = 10


def _bank(n_demos=8, capacity=80):
    ids = [f"d{i}" for i in range(n_demos)]
    return ReplayBank(ids, OBS_DIM, total_capacity=capacity), ids


def _fill(bank, demo_id, n, tag=1.0):
    for k in range(n):
        bank.append(demo_id, np.full(OBS_DIM, tag + k), [0.1, 0.2], tag + k, np.zeros(OBS_DIM), False)


def test_capacity_split_per_demo():
    bank, ids = _bank(n_demos=8, capacity=80)
    assert bank.per_capacity == 10
    _fill(bank, ids[0], 25)
    assert bank.buffers[ids[0]].size == 10  # FIFO eviction at per-demo capacity
    assert len(bank) == 10


def test_fifo_eviction_order():
    bank, ids = _bank(n_demos=2, capacity=8)  # 4 per demo
    _fill(bank, ids[0], 6, tag=100.0)
    kept = sorted(bank.buffers[ids[0]].rew.tolist())
    assert kept == [102.0, 103.0, 104.0, 105.0]  # oldest two evicted


def test_batch_split_51_205():
    bank, ids = _bank(n_demos=8, capacity=8000)
    for d in ids:
        _fill(bank, d, 50)
    lengths = {d: 30 for d in ids}
    raw = bank.sample(256, 5, 0.2, stream(0, "s"), lengths)
    assert len(raw.injected_pairs) == 51
    assert len(raw.obs) == 205
    assert len(raw.obs) + len(raw.injected_pairs) == 256


def test_zero_injection_all_replay():
    bank, ids = _bank(n_demos=6, capacity=600)
    for d in ids:
        _fill(bank, d, 20)
    raw = bank.sample(256, 5, 0.0, stream(1, "s"), {d: 30 for d in ids})
    assert len(raw.injected_pairs) == 0
    assert len(raw.obs) == 256


def test_items_come_from_five_distinct_buffers():
    bank, ids = _bank(n_demos=10, capacity=1000)
    for d in ids:
        _fill(bank, d, 30)
    raw = bank.sample(256, 5, 0.2, stream(2, "s"), {d: 30 for d in ids})
    used = set(raw.demo_ids) | {d for d, _ in raw.injected_pairs}
    assert len(used) <= 5


def test_insufficient_buffers_signal():
    bank, ids = _bank(n_demos=8, capacity=800)
    for d in ids[:3]:
        _fill(bank, d, 5)
    with pytest.raises(NotEnoughBuffers):
        bank.sample(64, 5, 0.2, stream(3, "s"), {d: 30 for d in ids})


def test_buffer_selection_frequency_uniform():
    # each eligible buffer should be selected with frequency 5/|demos|
    bank, ids = _bank(n_demos=10, capacity=1000)
    for d in ids:
        _fill(bank, d, 10)
    rng = stream(4, "s")
    n_rounds = 10_000
    counts = {d: 0 for d in ids}
    for _ in range(n_rounds):
        for d in bank.select_buffers(5, rng):
            counts[d] += 1
    expected = n_rounds * 5 / len(ids)
    # per-buffer selection count is hypergeometric-ish; 3 sigma of binomial bound
    sigma = np.sqrt(n_rounds * 0.5 * 0.5)
    for d, c in counts.items():
        assert abs(c - expected) <= 3 * sigma


def test_state_dict_roundtrip():
    bank, ids = _bank(n_demos=2, capacity=20)
    _fill(bank, ids[0], 7, tag=5.0)
    state = bank.state_dict()
    clone, _ = _bank(n_demos=2, capacity=20)
    clone.load_state_dict(state)
    assert clone.buffers[ids[0]].size == 7
    assert np.array_equal(clone.buffers[ids[0]].rew, bank.buffers[ids[0]].rew)


def test_transitions_never_mix_demo_ids():
    bank, ids = _bank(n_demos=6, capacity=600)
    for i, d in enumerate(ids):
        _fill(bank, d, 20, tag=1000.0 * i)
    raw = bank.sample(128, 5, 0.0, stream(5, "s"), {d: 30 for d in ids})
    for i, d in enumerate(raw.demo_ids):
        tag = raw.rew[i] // 1000.0
        assert ids[int(tag)] == d  # the item's payload matches its demo label
