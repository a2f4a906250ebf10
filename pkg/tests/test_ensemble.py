import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ensaudit.data import LabeledPredictions, RunSet
from ensaudit.ensemble import (
    EnsembleWeights,
    aggregate,
    ensemble_size_sweep,
    make_weights,
    sweep_from_csv,
    sweep_to_csv,
    weighting_cloud,
)
from ensaudit.metrics import fairness_report
from ensaudit.synthetic import SyntheticConfig, generate_synthetic

from conftest import datasets, random_dataset


def test_aggregate_examples():
    s = np.array([[0.2, 0.4]])
    assert aggregate(s)[0] == pytest.approx(0.3, abs=1e-15)
    assert aggregate(s, EnsembleWeights([1.0, 0.0]))[0] == 0.2
    assert aggregate(s, EnsembleWeights([0.25, 0.75]))[0] == pytest.approx(0.35, abs=1e-15)
    with pytest.raises(ValueError):
        aggregate(s, EnsembleWeights([1.0]))


def test_make_weights_examples():
    np.testing.assert_array_equal(make_weights("uniform", 4).weights, [0.25] * 4)
    np.testing.assert_array_equal(make_weights("fairness_softmax", 2, fairness_violations=[0, 0], temperature=3.0).weights, [0.5, 0.5])
    w = make_weights("fairness_softmax", 2, fairness_violations=[0.1, 0.3], temperature=0.1).weights
    np.testing.assert_allclose(w, [0.8808, 0.1192], atol=1e-4)
    # independent oracle: logistic of the logit difference
    assert w[0] == pytest.approx(1 / (1 + math.exp(-2.0)), abs=1e-15)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(mode="fairness_softmax", n=2, fairness_violations=[0.1, 0.2], temperature=0.0),
        dict(mode="fairness_softmax", n=2, fairness_violations=[0.1, 1.2], temperature=1.0),
        dict(mode="dirichlet", n=3),
        dict(mode="bogus", n=3),
        dict(mode="uniform", n=0),
    ],
)
def test_make_weights_errors(kwargs):
    with pytest.raises(ValueError):
        make_weights(**kwargs)


def test_weights_invariants_rejected():
    for bad in ([0.5, 0.6], [-0.1, 1.1], [], [math.nan, 1.0]):
        with pytest.raises(ValueError):
            EnsembleWeights(bad)


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 12),
    seed=st.integers(0, 2**32 - 1),
    tau=st.floats(1e-3, 10),
    mode=st.sampled_from(["uniform", "dirichlet", "fairness_softmax"]),
)
def test_make_weights_always_valid(n, seed, tau, mode):
    f = np.random.default_rng(seed).random(n)
    w = make_weights(mode, n, seed=seed, fairness_violations=f, temperature=tau)
    assert len(w) == n and np.all(w.weights >= 0)
    assert abs(math.fsum(w.weights) - 1.0) <= 1e-12


def test_dirichlet_is_seeded_and_uniform_on_simplex():
    a = make_weights("dirichlet", 3, seed=5).weights
    b = make_weights("dirichlet", 3, seed=5).weights
    np.testing.assert_array_equal(a, b)
    draws = np.array([make_weights("dirichlet", 3, seed=s).weights for s in range(4000)])
    # Dir(1,1,1) marginals are Beta(1, 2): mean 1/3, variance 1/18
    np.testing.assert_allclose(draws.mean(axis=0), 1 / 3, atol=0.015)
    np.testing.assert_allclose(draws.var(axis=0), 1 / 18, atol=0.006)


@settings(max_examples=100, deadline=None)
@given(data=datasets(max_n=8), seed=st.integers(0, 2**32 - 1))
def test_aggregate_properties(data, seed):
    s = data.scores
    rng = np.random.default_rng(seed)
    perm = rng.permutation(s.shape[1])
    np.testing.assert_array_equal(aggregate(s), aggregate(s[:, perm])) if s.shape[1] <= 2 else np.testing.assert_allclose(
        aggregate(s), aggregate(s[:, perm]), rtol=0, atol=1e-15
    )
    w = make_weights("dirichlet", s.shape[1], seed=seed)
    out = aggregate(s, w)
    assert np.all(s.min(axis=1) <= out) and np.all(out <= s.max(axis=1))
    copies = np.repeat(s[:, :1], 7, axis=1)
    assert np.max(np.abs(aggregate(copies) - s[:, 0])) <= 1e-15


def runset_of(data, sizes):
    runs, start = [], 0
    for size in sizes:
        runs.append(list(range(start, start + size)))
        start += size
    return RunSet.from_runs(data, runs)


def test_sweep_identical_members_constant():
    base = random_dataset(np.random.default_rng(0), k=80, n=1)
    data = base.with_scores(np.repeat(base.scores, 6, axis=1))
    curves = ensemble_size_sweep(runset_of(data, [3, 3]), orderings=4, seed=1)
    for c in curves.values():
        assert c.sizes == [1, 2, 3]
        assert len(set(c.mean)) == 1 and all(sd == 0.0 for sd in c.std)


def test_sweep_single_prefix_matches_member_report():
    data = random_dataset(np.random.default_rng(2), k=60, n=4)
    rs = RunSet.single_run(data)
    curves = ensemble_size_sweep(rs, n_max=1, orderings=1, seed=9, metrics=("accuracy", "aod", "spd_signed"))
    first = int(np.random.default_rng(np.random.SeedSequence([9, 0, 0])).permutation(4)[0])
    ref = fairness_report(data.scores[:, first], data.labels, data.groups, 0.5)
    for m in ("accuracy", "aod", "spd_signed"):
        assert curves[m].mean == [ref.metric(m)] and curves[m].std == [0.0]


def test_sweep_stored_order_and_errors():
    data = random_dataset(np.random.default_rng(3), k=40, n=5)
    rs = runset_of(data, [3, 2])
    c = ensemble_size_sweep(rs, orderings=0, metrics=("accuracy",))["accuracy"]
    assert c.sizes == [1, 2] and c.metadata["sampling"] == "stored member order"
    with pytest.raises(ValueError):
        ensemble_size_sweep(rs, n_max=3)
    with pytest.raises(ValueError):
        ensemble_size_sweep(rs, metrics=("nope",))


def test_sweep_deterministic_under_parallelism(monkeypatch):
    rs = generate_synthetic(SyntheticConfig(per_cell=50, members=4, runs=3, seed=4))
    metrics = ("accuracy", "spd_abs", "div", "div_y1_a1")
    outs = []
    for threads in ("1", "2", "7"):
        monkeypatch.setenv("ENSAUDIT_THREADS", threads)
        outs.append(sweep_to_csv(ensemble_size_sweep(rs, orderings=3, seed=11, metrics=metrics)))
    assert outs[0] == outs[1] == outs[2]


def test_sweep_csv_round_trip():
    rs = generate_synthetic(SyntheticConfig(per_cell=20, members=3, runs=2, seed=1))
    curves = ensemble_size_sweep(rs, orderings=2, seed=3)
    text = sweep_to_csv(curves)
    assert text.splitlines()[1] == "metric,n,mean,std"
    back = sweep_from_csv(text)
    for m, c in curves.items():
        assert (back[m].sizes, back[m].mean, back[m].std) == (c.sizes, c.mean, c.std)
        assert back[m].metadata == c.metadata


def test_weighting_cloud_seeded():
    data = random_dataset(np.random.default_rng(5), k=50, n=3)
    a = weighting_cloud(data, 5, seed=2)
    assert a == weighting_cloud(data, 5, seed=2)
    assert len(a) == 5 and all(abs(sum(p["weights"]) - 1) < 1e-12 for p in a)


def test_sweep_disparate_benefits_shape():
    """Averaged over 20 seeds at g=0.8: accuracy rises with n and spd_abs(10) > spd_abs(1)."""
    acc = np.zeros(10)
    spd = np.zeros(10)
    for seed in range(20):
        rs = generate_synthetic(SyntheticConfig(gap=0.8, spread=1.0, seed=seed))
        curves = ensemble_size_sweep(rs, orderings=1, seed=seed, metrics=("accuracy", "spd_abs"))
        acc += np.array(curves["accuracy"].mean) / 20
        spd += np.array(curves["spd_abs"].mean) / 20
    print(f"accuracy by n: {np.round(acc, 5).tolist()}")
    print(f"spd_abs by n: {np.round(spd, 5).tolist()}")
    assert np.all(np.diff(acc) >= 0), "accuracy curve not non-decreasing on average"
    assert spd[9] > spd[0], "spd_abs at n=10 does not exceed n=1"
