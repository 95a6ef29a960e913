import numpy as np
import pytest

from conftest import random_store
from oracles import spsa_reference
from qnlg.compiler import ParameterStore, QubitBudget, eval_probs
from qnlg.grammar import LabeledDataset, generate_dataset
from qnlg.train import (
    PROB_FLOOR,
    DatasetLoss,
    Model,
    SpsaConfig,
    fit,
    format_model,
    loss,
    parse_model,
    predict,
    spsa_step,
    spsa_update,
)


class FixedProbs(DatasetLoss):
    """Loss over a hand-set probability table instead of simulated circuits."""

    table: np.ndarray

    def probs(self, values=None):
        return self.table


def quadratic(theta):
    return float(((theta - 1.0) ** 2).sum())


def test_config_validation():
    with pytest.raises(ValueError):
        SpsaConfig(iterations=0)
    with pytest.raises(ValueError):
        SpsaConfig(c=0)
    with pytest.raises(ValueError):
        SpsaConfig(a=-1)
    with pytest.raises(ValueError):
        SpsaConfig(alpha=0.1, gamma=0.2)


def test_gains():
    cfg = SpsaConfig(iterations=500, c=0.2)
    a0, c0 = cfg.gains(0)
    assert c0 == 0.2
    assert a0 == pytest.approx(cfg.first_step)
    a9, c9 = cfg.gains(9)
    assert a9 == pytest.approx(cfg.step_scale / (5 + 10) ** 0.602)
    assert c9 == pytest.approx(0.2 / 10**0.101)


def test_spsa_converges_on_quadratic():
    config = SpsaConfig(iterations=500, seed=0)
    rng = np.random.default_rng(0)
    theta = np.array([4.0])
    for k in range(config.iterations):
        theta = spsa_update(theta, quadratic, config, k, rng)
    assert abs(theta[0] - 1) < 0.05
    ref = spsa_reference(quadratic, [4.0], 500, config.step_scale, config.c, config.stability,
                         config.alpha, config.gamma, np.random.default_rng(0))
    assert theta[0] == pytest.approx(ref[0], abs=1e-12)


def test_spsa_matches_reference_in_many_dimensions():
    config = SpsaConfig(iterations=200, a=0.3, c=0.05, A=10)
    rng = np.random.default_rng(8)
    start = np.array([3.0, -2.0, 0.5, 7.0])
    theta = start
    for k in range(200):
        theta = spsa_update(theta, quadratic, config, k, rng)
    ref = spsa_reference(quadratic, start, 200, 0.3, 0.05, 10, 0.602, 0.101, np.random.default_rng(8))
    np.testing.assert_allclose(theta, ref, atol=1e-12)


def test_spsa_with_zero_gain_is_identity(food):
    cfg, entries, lex = food
    ds = generate_dataset(cfg, entries, 8, seed=1)
    store = random_store(lex, 2, seed=1)
    out = spsa_step(store, ds, SpsaConfig(a=0.0), 0, np.random.default_rng(0))
    assert out.values.tolist() == store.values.tolist()


def test_loss_uniform_closed_form(food):
    cfg, entries, lex = food
    ds = generate_dataset(cfg, entries, 130, seed=0)
    # all-zero angles give uniform predictions on every bundled sentence shape
    keys = [(e.word, e.type) for e in entries]
    store = ParameterStore(keys, QubitBudget.for_topics(2))
    assert loss(store, ds) == pytest.approx(130 * np.log(2), abs=1e-9)


def test_loss_zero_for_perfect_predictions(food):
    cfg, entries, lex = food
    ds = generate_dataset(cfg, entries, 6, seed=3)
    obj = FixedProbs(random_store(lex, 2, 0), ds)
    obj.table = np.eye(2)[obj.labels]
    assert obj() == 0.0


def test_loss_is_non_negative_and_finite(food):
    cfg, entries, lex = food
    ds = generate_dataset(cfg, entries, 20, seed=3)
    for seed in range(5):
        value = loss(random_store(lex, 2, seed), ds)
        assert 0 <= value < np.inf
    floor = -20 * np.log(PROB_FLOOR)
    assert value <= floor


def test_loss_invariant_under_permutation(food):
    cfg, entries, lex = food
    ds = generate_dataset(cfg, entries, 20, seed=3)
    store = random_store(lex, 2, seed=2)
    shuffled = LabeledDataset(ds.items[::-1], ds.k, ds.vocabulary)
    assert loss(store, shuffled) == pytest.approx(loss(store, ds), rel=1e-12)


def test_loss_decreases_when_label_probability_rises(food):
    cfg, entries, lex = food
    ds = generate_dataset(cfg, entries, 6, seed=3)
    obj = FixedProbs(random_store(lex, 2, seed=2), ds)
    obj.table = DatasetLoss(obj.store, ds).probs()
    before = obj()
    label = ds.labels[0]
    obj.table[0, label] = min(1.0, obj.table[0, label] + 0.1)
    assert obj() < before


def test_shot_loss_close_to_exact(food):
    cfg, entries, lex = food
    ds = generate_dataset(cfg, entries, 10, seed=3)
    store = random_store(lex, 2, seed=2)
    exact = loss(store, ds)
    noisy = loss(store, ds, shots=100_000, rng=np.random.default_rng(0))
    assert noisy == pytest.approx(exact, rel=0.02)


def test_fit_trace_length_and_determinism(food):
    cfg, entries, lex = food
    ds = generate_dataset(cfg, entries, 8, seed=3)
    store = random_store(lex, 2, seed=5)
    one = fit(store, ds, SpsaConfig(iterations=1))
    assert len(one.losses) == 1 and 0 <= one.accuracy <= 1
    a = fit(store, ds, SpsaConfig(iterations=15, seed=4))
    b = fit(store, ds, SpsaConfig(iterations=15, seed=4))
    assert a.losses == b.losses
    assert a.store.values.tolist() == b.store.values.tolist()
    assert store.values.tolist() == random_store(lex, 2, seed=5).values.tolist()


def test_fit_threads_match_serial(food):
    cfg, entries, lex = food
    ds = generate_dataset(cfg, entries, 8, seed=3)
    store = random_store(lex, 2, seed=5)
    a = fit(store, ds, SpsaConfig(iterations=5, seed=1))
    b = fit(store, ds, SpsaConfig(iterations=5, seed=1), threads=3)
    assert a.losses == b.losses


def test_fit_rejects_empty_dataset(food):
    _, entries, lex = food
    with pytest.raises(ValueError):
        fit(random_store(lex, 2, 0), LabeledDataset([], 2, entries), SpsaConfig())


def test_fit_learns_small_dataset(food_model):
    store, ds = food_model
    acc = np.mean([predict(store, s, 2) == t for s, t in ds.items])
    assert acc >= 0.85


def test_predict_tie_goes_to_lowest_index(toy):
    _, entries, lex = toy
    store = ParameterStore([(e.word, e.type) for e in entries], QubitBudget.for_topics(2))
    sentence = "Alice generates language".split()
    np.testing.assert_allclose(eval_probs(sentence, lex, store.budget, store, 2), [0.5, 0.5])
    assert predict(store, sentence, 2) == 0


def test_predict_exact_and_shots_agree_on_clear_margins(food_model, food):
    store, _ = food_model
    cfg, entries, lex = food
    ds = generate_dataset(cfg, entries, 60, seed=9)
    rng = np.random.default_rng(0)
    checked = 0
    for sentence, _ in ds.items:
        p = eval_probs(sentence, lex, store.budget, store, 2)
        if abs(p[0] - p[1]) > 0.05:
            checked += 1
            assert predict(store, sentence, 2) == predict(store, sentence, 2, shots=100_000, rng=rng)
    assert checked > 0


def test_model_round_trip(food_model):
    store, _ = food_model
    text = format_model(Model(store, 2, seed=7))
    model = parse_model(text)
    assert model.k == 2 and model.seed == 7
    assert model.store.keys == store.keys
    assert model.store.values.tolist() == store.values.tolist()
    assert format_model(model) == text


@pytest.mark.parametrize("text, message", [
    ("@k 2\n", "header lacks"),
    ("@k 2\n@depth 1\n@q_n 1\n@q_s 1\nman\tn\t0.1\n", "expects 3 angles"),
    ("@k two\n", "line 1"),
])
def test_model_parse_errors(text, message):
    with pytest.raises(ValueError, match=message):
        parse_model(text)
