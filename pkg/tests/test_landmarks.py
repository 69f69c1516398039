import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ranknas.data import generate_dataset, split_dataset
from ranknas.errors import InfeasibleThresholdError, InvalidArgumentError
from ranknas.hparams import TrainHParams
from ranknas.landmarks import (BenchmarkCache, LandmarkSet, RegSchedule, ScheduleMode,
                               StandaloneResult, extend_landmarks, hparams_hash, lambda_at,
                               n_pairs, pair_from_index, pairwise_hinge, regularizer_full,
                               regularizer_sampled, sample_landmarks, sample_landmarks_with_root,
                               sort_landmarks, train_standalone, train_standalone_many)
from ranknas.nn import evaluate, init_params
from ranknas.space import Architecture, builtin_space, enumerate_space, hamming_distance


def rec(arch, loss, acc=0.5, space="micro"):
    a = Architecture.parse(arch) if isinstance(arch, str) else arch
    return StandaloneResult(space, a, loss, acc, 0, 1)


def landmark_set(archs, gt_losses):
    s = LandmarkSet([rec(a, l) for a, l in zip(archs, gt_losses)])
    sort_landmarks(s)
    return s


def random_net(space, seed, width=6, d=4, c=3):
    rng = np.random.default_rng(seed)
    net = init_params(space, width, d, c, rng)
    for k, p in net.params.items():
        if k.endswith(".b"):
            p.values[:] = rng.normal(0, 0.3, p.values.shape)
    X = rng.normal(size=(12, d))
    y = rng.integers(0, c, 12)
    return net, (X, y)


# ---------------------------------------------------------------- hinge values

def test_hinge_worked_examples():
    assert pairwise_hinge([0.2, 0.5]) == 0.0
    assert pairwise_hinge([0.5, 0.2]) == pytest.approx(0.3, abs=1e-12)
    assert pairwise_hinge([0.9, 0.5, 0.2]) == pytest.approx(1.4, abs=1e-12)


def test_pair_indexing_is_lexicographic():
    for M in (2, 3, 5, 9):
        pairs = [pair_from_index(k, M) for k in range(n_pairs(M))]
        assert pairs == [(i, j) for i in range(M) for j in range(i + 1, M)]


def _net_losses(net, archs, batch):
    return [evaluate(net, a, *batch)[0] for a in archs]


def test_full_regularizer_matches_direct_evaluation(micro):
    net, batch = random_net(micro, 0)
    archs = [Architecture.parse(s) for s in ("3-2-3", "1-1-2", "0-3-1", "2-2-2", "3-3-0")]
    lm = landmark_set(archs, [0.1, 0.2, 0.3, 0.4, 0.5])
    direct = pairwise_hinge(_net_losses(net, lm.archs, batch))
    assert regularizer_full(net, lm, batch) == pytest.approx(direct, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), M=st.integers(2, 7))
def test_full_regularizer_zero_iff_sorted(seed, M):
    space = builtin_space("micro")
    net, batch = random_net(space, seed)
    rng = np.random.default_rng(seed)
    archs = [Architecture(tuple(c)) for c in rng.permutation(list(map(lambda a: a.codes,
                                                                      enumerate_space(space))))[:M]]
    sn_losses = _net_losses(net, archs, batch)
    gt = rng.permutation(M).astype(float)
    lm = landmark_set(archs, gt)
    ordered = [sn_losses[archs.index(a)] for a in lm.archs]
    nondecreasing = all(x <= y for x, y in zip(ordered, ordered[1:]))
    assert (regularizer_full(net, lm, batch) == 0.0) == nondecreasing
    # GT order that agrees with the super-net always gives zero
    agree = landmark_set(archs, sn_losses)
    assert regularizer_full(net, agree, batch) == 0.0


def test_sampled_with_all_pairs_equals_full(micro):
    net, batch = random_net(micro, 1)
    archs = [Architecture.parse(s) for s in ("3-2-3", "1-1-2", "0-3-1", "2-2-2", "3-3-0")]
    lm = landmark_set(archs, [0.5, 0.4, 0.3, 0.2, 0.1])
    full = regularizer_full(net, lm, batch)
    value, pairs = regularizer_sampled(net, lm, batch, 10, np.random.default_rng(0))
    assert value == full and sorted(pairs) == [(i, j) for i in range(5) for j in range(i + 1, 5)]
    two = landmark_set(archs[:2], [0.2, 0.1])
    assert regularizer_sampled(net, two, batch, 1, np.random.default_rng(0))[0] == \
        regularizer_full(net, two, batch)


def test_sampled_clamps_m_with_warning(micro, caplog):
    net, batch = random_net(micro, 2)
    lm = landmark_set([Architecture.parse(s) for s in ("3-2-3", "1-1-2", "0-3-1")], [1, 2, 3])
    with caplog.at_level("WARNING"):
        value, pairs = regularizer_sampled(net, lm, batch, 50, np.random.default_rng(0))
    assert len(pairs) == 3 and "exceeds" in caplog.text
    assert value == regularizer_full(net, lm, batch)


def test_sampled_pairs_distinct_and_ordered(micro):
    net, batch = random_net(micro, 3)
    archs = list(enumerate_space(micro))[:8]
    lm = landmark_set(archs, np.arange(8.0))
    _, pairs = regularizer_sampled(net, lm, batch, 12, np.random.default_rng(4))
    assert len(set(pairs)) == 12 and all(i < j for i, j in pairs)


def test_sampled_monte_carlo_mean(micro):
    net, batch = random_net(micro, 5)
    archs = [Architecture.parse(s) for s in ("3-2-3", "1-1-2", "0-3-1", "2-2-2", "3-3-0")]
    sn = _net_losses(net, archs, batch)
    lm = landmark_set(archs, [-x for x in sn])  # fully inverted: every pair active
    full = regularizer_full(net, lm, batch)
    rng = np.random.default_rng(0)
    mean = np.mean([regularizer_sampled(net, lm, batch, 1, rng)[0] for _ in range(10_000)])
    assert abs(mean - full / 10) <= 0.02 * full / 10


def test_regularizer_needs_two_landmarks(micro):
    net, batch = random_net(micro, 0)
    one = landmark_set([Architecture.parse("1-1-1")], [0.3])
    with pytest.raises(InvalidArgumentError):
        regularizer_full(net, one, batch)
    with pytest.raises(InvalidArgumentError):
        regularizer_sampled(net, one, batch, 1, np.random.default_rng(0))


# ---------------------------------------------------------------- gradients

def _numeric(fn, param, eps=1e-4):
    out = np.zeros_like(param)
    for idx in np.ndindex(param.shape):
        old = param[idx]
        param[idx] = old + eps
        up = fn()
        param[idx] = old - eps
        down = fn()
        param[idx] = old
        out[idx] = (up - down) / (2 * eps)
    return out


@pytest.mark.parametrize("seed", range(4))
def test_regularizer_gradient_matches_finite_differences(seed, small):
    net, batch = random_net(small, seed, width=4)
    rng = np.random.default_rng(seed)
    archs = [Architecture(tuple(rng.integers(0, 5, 6))) for _ in range(4)]
    sn = _net_losses(net, archs, batch)
    lm = landmark_set(archs, [-x for x in sn])
    lam = 2.5
    net.zero_grad()
    regularizer_full(net, lm, batch, grad_scale=lam)
    for key, p in net.params.items():
        num = _numeric(lambda: lam * regularizer_full(net, lm, batch), p.values)
        np.testing.assert_allclose(p.grad, num, rtol=1e-3, atol=1e-7, err_msg=key)


def test_sampled_gradient_matches_full_for_all_pairs(micro):
    net, batch = random_net(micro, 7)
    archs = [Architecture.parse(s) for s in ("3-2-3", "1-1-2", "0-3-1", "2-2-2")]
    lm = landmark_set(archs, [0.4, 0.1, 0.3, 0.2])
    ref = net.copy()
    regularizer_full(ref, lm, batch, grad_scale=1.5)
    regularizer_sampled(net, lm, batch, 6, np.random.default_rng(0), grad_scale=1.5)
    for k in net.params:
        np.testing.assert_allclose(net.params[k].grad, ref.params[k].grad, rtol=1e-12, atol=1e-15)


# ---------------------------------------------------------------- schedule

ALL_MODES = list(ScheduleMode)


@pytest.mark.parametrize("mode", ALL_MODES)
def test_zero_through_warmup(mode):
    s = RegSchedule(10.0, 5, 20, mode)
    assert all(lambda_at(s, t) == 0.0 for t in range(6))
    assert lambda_at(s, 6) > 0.0


def test_cos_increase_endpoints_and_midpoint():
    for lam in (1.0, 10.0, 0.3):
        s = RegSchedule(lam, 4, 24, ScheduleMode.COS_INCREASE)
        assert lambda_at(s, 4) == 0.0
        assert lambda_at(s, 14) == lam / 2
        assert lambda_at(s, 24) == lam


def test_mode_shapes():
    s = lambda mode: RegSchedule(8.0, 0, 8, mode)
    assert [lambda_at(s(ScheduleMode.CONSTANT), t) for t in (1, 8)] == [8.0, 8.0]
    assert [lambda_at(s(ScheduleMode.STEP_INCREASE), t) for t in (1, 3, 5, 7)] == [2, 4, 6, 8]
    assert [lambda_at(s(ScheduleMode.STEP_DECREASE), t) for t in (1, 3, 5, 7)] == [8, 6, 4, 2]
    dec = [lambda_at(s(ScheduleMode.COS_DECREASE), t) for t in range(1, 9)]
    inc = [lambda_at(s(ScheduleMode.COS_INCREASE), t) for t in range(1, 9)]
    assert dec == sorted(dec, reverse=True) and inc == sorted(inc)
    assert lambda_at(s(ScheduleMode.COS_DECREASE), 8) == 0.0


@settings(max_examples=200)
@given(lam=st.floats(0, 100), tw=st.integers(0, 30), extra=st.integers(1, 60),
       mode=st.sampled_from(ALL_MODES), data=st.data())
def test_schedule_bounds(lam, tw, extra, mode, data):
    s = RegSchedule(lam, tw, tw + extra, mode)
    t = data.draw(st.integers(0, tw + extra))
    v = lambda_at(s, t)
    assert 0.0 <= v <= lam
    if t <= tw:
        assert v == 0.0


def test_schedule_validation():
    with pytest.raises(InvalidArgumentError):
        RegSchedule(1.0, 5, 5)
    with pytest.raises(InvalidArgumentError):
        RegSchedule(-1.0, 0, 5)
    with pytest.raises(InvalidArgumentError):
        lambda_at(RegSchedule(1.0, 0, 5), 6)
    with pytest.raises(ValueError):
        RegSchedule(1.0, 0, 5, "sideways")


# ---------------------------------------------------------------- sampler

@pytest.mark.parametrize("seed", range(20))
def test_landmarks_far_from_root_and_distinct(seed, small):
    root, found = sample_landmarks_with_root(small, 10, 4, np.random.default_rng(seed))
    assert len(found) == len(set(found)) == 10
    assert root not in found
    assert all(hamming_distance(a, root) > 4 for a in found)


def test_sampler_deterministic(small):
    a = sample_landmarks(small, 6, 3, np.random.default_rng(2))
    assert a == sample_landmarks(small, 6, 3, np.random.default_rng(2))


def test_sampler_infeasible_thresholds(micro, small):
    with pytest.raises(InfeasibleThresholdError):
        sample_landmarks(small, 3, small.n_edges, np.random.default_rng(0))
    # only 27 micro architectures differ from a root in all three positions
    with pytest.raises(InfeasibleThresholdError):
        sample_landmarks(micro, 28, 2, np.random.default_rng(0))
    assert len(sample_landmarks(micro, 27, 2, np.random.default_rng(0))) == 27
    with pytest.raises(InfeasibleThresholdError):
        sample_landmarks(micro, 27, 2, np.random.default_rng(0), budget=30)


# ---------------------------------------------------------------- landmark sets

def test_sort_is_stable():
    s = LandmarkSet([rec("0-0-1", 0.1), rec("0-0-2", 0.2), rec("0-0-3", 0.3)])
    sort_landmarks(s)
    assert [str(a) for a in s.archs] == ["0-0-1", "0-0-2", "0-0-3"]
    s = LandmarkSet([rec("0-0-3", 0.3), rec("0-0-2", 0.2), rec("0-0-1", 0.1)])
    sort_landmarks(s)
    assert [str(a) for a in s.archs] == ["0-0-1", "0-0-2", "0-0-3"]
    s = LandmarkSet([rec("1-0-0", 0.5), rec("2-0-0", 0.5), rec("0-0-0", 0.1), rec("3-0-0", 0.5)])
    sort_landmarks(s)
    assert [str(a) for a in s.archs] == ["0-0-0", "1-0-0", "2-0-0", "3-0-0"]


def test_extend_merges_and_dedupes():
    base = landmark_set([Architecture.parse(f"{i}-0-0") for i in range(4)], [0.4, 0.3, 0.2, 0.1])
    grown = extend_landmarks(base, [rec("0-0-0", 9.9), rec("0-1-0", 0.25)])
    assert len(grown) == 5
    assert grown.losses() == sorted(grown.losses())
    assert dict(zip(map(str, grown.archs), grown.losses()))["0-0-0"] == 0.4
    assert extend_landmarks(base, []).entries == base.entries
    disjoint = extend_landmarks(base, [rec(f"{i}-1-1", 0.05 * i) for i in range(4)])
    assert len(disjoint) == 8 and disjoint.losses() == sorted(disjoint.losses())


# ---------------------------------------------------------------- cache

def test_cache_file_round_trip(tmp_path):
    path = tmp_path / "cache.txt"
    c = BenchmarkCache(path)
    r1 = StandaloneResult("micro", Architecture.parse("0-3-1"), 0.25, 0.9, 0, 77, 1.5)
    assert c.put(r1) is r1
    dup = StandaloneResult("micro", Architecture.parse("0-3-1"), 9.0, 0.1, 0, 77, 0.0)
    assert c.put(dup) is r1
    assert len(path.read_text().splitlines()) == 1
    back = BenchmarkCache(path)
    assert back.get(r1.key) == StandaloneResult("micro", r1.arch, 0.25, 0.9, 0, 77, 1.5)
    assert back.get(r1.key).to_line() == "micro,0-3-1,77,0,0.25,0.9,1.500000"


def test_cache_first_record_wins_on_load(tmp_path):
    path = tmp_path / "cache.txt"
    path.write_text("# comment\nmicro,1-1-1,5,0,0.5,0.8,1.0\n\nmicro,1-1-1,5,0,0.1,0.99,1.0\n"
                    "micro,1-1-1,5,1,0.2,0.9,1.0\n")
    c = BenchmarkCache(path)
    assert len(c) == 2
    assert c.get(("micro", "1-1-1", 5, 0)).valid_loss == 0.5
    assert [r.seed for r in c.records("micro", 5, 1)] == [1]


@pytest.fixture(scope="module")
def zero_noise():
    data = generate_dataset(2, 120, 4, 3, 0.0)
    return data, split_dataset(data, (0.4, 0.3, 0.3), 0)


def test_standalone_cache_hit_is_identical(tmp_path, zero_noise):
    data, splits = zero_noise
    space = builtin_space("micro")
    hp = TrainHParams(width=8, standalone_epochs=3)
    cache = BenchmarkCache(tmp_path / "c.txt")
    a = train_standalone(space, Architecture.parse("2-0-1"), data, splits, hp, cache)
    b = train_standalone(space, Architecture.parse("2-0-1"), data, splits, hp, cache)
    assert a is b and len(cache) == 1
    fresh = train_standalone(space, Architecture.parse("2-0-1"), data, splits, hp)
    assert (fresh.valid_loss, fresh.valid_acc) == (a.valid_loss, a.valid_acc)


def test_linear_path_solves_zero_noise_data(zero_noise):
    # fixture: every micro architecture that connects input to output through a
    # Linear op separates noiseless blobs perfectly
    data, splits = zero_noise
    space = builtin_space("micro")
    hp = TrainHParams(width=8, standalone_epochs=30)
    for s in ("0-2-0", "2-0-1", "1-0-2", "2-2-2", "0-2-3", "2-0-3"):
        r = train_standalone(space, Architecture.parse(s), data, splits, hp)
        assert r.valid_acc == 1.0, s


def test_disconnected_edge_does_not_matter(tiny_problem):
    # edge (0,1) feeds nothing when edge (1,2) is Zero
    data, splits = tiny_problem
    space = builtin_space("micro")
    hp = TrainHParams(width=8, standalone_epochs=8)
    a = [train_standalone(space, Architecture.parse("0-3-0"), data, splits, hp, seed=s).valid_loss
         for s in range(3)]
    b = [train_standalone(space, Architecture.parse("1-3-0"), data, splits, hp, seed=s).valid_loss
         for s in range(3)]
    noise = np.std(a + b, ddof=1)
    assert abs(np.mean(a) - np.mean(b)) <= 2 * noise


def test_hash_tracks_training_inputs(tiny_problem):
    data, splits = tiny_problem
    hp = TrainHParams()
    base = hparams_hash(hp, data, splits)
    assert base == hparams_hash(TrainHParams(), data, splits)
    assert base != hparams_hash(TrainHParams(standalone_epochs=61), data, splits)
    assert base == hparams_hash(TrainHParams(lr=0.5), data, splits)  # super-net only
    other = split_dataset(data, (0.4, 0.3, 0.3), 1)
    assert base != hparams_hash(hp, data, other)
    assert 0 <= base < 2**63


def test_parallel_fill_matches_serial(tmp_path, tiny_problem, tiny_hparams):
    data, splits = tiny_problem
    space = builtin_space("micro")
    archs = [Architecture.parse(s) for s in ("3-3-3", "0-2-1", "1-3-2", "2-2-0")]
    serial = train_standalone_many(space, archs, data, splits, tiny_hparams,
                                   BenchmarkCache(tmp_path / "a.txt"))
    parallel = train_standalone_many(space, archs, data, splits, tiny_hparams,
                                     BenchmarkCache(tmp_path / "b.txt"), jobs=2)
    assert [(r.arch, r.valid_loss, r.valid_acc) for r in serial] == \
        [(r.arch, r.valid_loss, r.valid_acc) for r in parallel]
    lines = lambda p: [l.rsplit(",", 1)[0] for l in p.read_text().splitlines()]
    assert lines(tmp_path / "a.txt") == lines(tmp_path / "b.txt")
