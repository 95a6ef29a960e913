"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from conftest import bundled, random_store
from oracles import all_normal_forms
from qnlg.cli import main
from qnlg.compiler import ParameterStore, QubitBudget, contract_oracle, eval_probs
from qnlg.generate import accept, temperature
from qnlg.grammar import (
    SENTENCE,
    SimpleType,
    as_lexicon,
    enumerate_derivations,
    generate_dataset,
    parse_lexicon,
    reduce,
    reduce_factors,
)
from qnlg.qsim import Gate, ParamCircuit, outcome_probs, run, sample_shots
from qnlg.train import SpsaConfig, fit

pytestmark = pytest.mark.slow

# generation bounds follow the sentence lengths seen in each training set
FOOD_BOUNDS = ("--min-len", "3", "--max-len", "4")
HEADLINE_BOUNDS = ("--min-len", "3", "--max-len", "5")
FOOD_TOPIC = 0
POLITICS_TOPIC = 1
HEADLINE_ITERATIONS = 1000


def cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"qnlg {' '.join(map(str, argv))} exited {code}"


def read_report(path):
    """Per-algorithm guess counts and timeout flags from a benchmark report."""
    out = {}
    lines = open(path, encoding="utf-8").read().split("\n\n")[0].splitlines()[1:]
    for line in lines:
        algo, _seed, _topic, guesses, timed_out, *_ = line.split("\t")
        out.setdefault(algo, []).append((int(guesses), timed_out == "1"))
    return out


def food_pipeline(directory):
    d = {n: str(directory / n) for n in ("data.tsv", "model.txt", "bench.tsv")}
    cli("gen-dataset", "--grammar", "food_it", "--seed", 0, "--dataset", d["data.tsv"])
    cli("train", "--grammar", "food_it", "--seed", 0, "--dataset", d["data.tsv"], "--model", d["model.txt"])
    cli("benchmark", "--model", d["model.txt"], "--topics", FOOD_TOPIC, "--runs", 30, "--seed", 0,
        *FOOD_BOUNDS, "--report", d["bench.tsv"])
    return d


@pytest.fixture(scope="module")
def food_runs(tmp_path_factory):
    """The demo pipeline run twice from scratch in separate directories."""
    return [food_pipeline(tmp_path_factory.mktemp(name)) for name in ("first", "second")]


def test_criterion_1_uniform_two_qubit_circuit(criterion):
    circuit = ParamCircuit(2, [Gate("H", (0,)), Gate("H", (1,))], out_qubits=(0, 1))
    exact = outcome_probs(run(circuit), (0, 1), 4)
    dev_exact = float(np.abs(exact - 0.25).max())
    freq = sample_shots(exact, 100_000, np.random.default_rng(0))
    dev_shots = float(np.abs(freq - 0.25).max())
    ok = criterion(1, dev_exact <= 1e-12 and dev_shots <= 0.01,
                   f"exact max dev {dev_exact:.1e}, 100000-shot max dev {dev_shots:.4f}")
    assert ok


def test_criterion_2_grammaticality_oracle(criterion):
    _, entries = parse_lexicon("S -> Alice generates language\nAlice :: n\nlanguage :: n\n"
                               "generates :: n.r s n.l\n")
    lex = as_lexicon(entries)
    example = reduce([lex[w] for w in "Alice generates language".split()]) == SENTENCE

    rng = np.random.default_rng(2024)
    bad = 0
    for _ in range(1000):
        length = int(rng.integers(0, 9))
        factors = [SimpleType(("n", "s")[int(rng.integers(2))], int(rng.integers(-2, 3)))
                   for _ in range(length)]
        forms = all_normal_forms(factors)
        got = reduce_factors(factors).normal_form.factors
        agrees = (got in forms and len(got) == min(map(len, forms))
                  and (got == (SENTENCE.factors[0],)) == ((SENTENCE.factors[0],) in forms))
        bad += not agrees
    ok = criterion(2, example and bad == 0,
                   f"example reduces to s: {example}; disagreements on 1000 random sequences: {bad}")
    assert ok


def test_criterion_3_compilation_faithfulness(criterion):
    worst, checked = 0.0, 0
    for name, k in (("food_it", 2), ("headlines", 4)):
        cfg, entries = parse_lexicon(bundled(name))
        lex = as_lexicon(entries)
        shapes = {}
        for sentence, _ in enumerate_derivations(cfg):
            shapes.setdefault(tuple(str(lex[w]) for w in sentence), sentence)
        for sentence in shapes.values():
            for seed in range(50):
                store = random_store(lex, k, seed)
                p = eval_probs(sentence, lex, store.budget, store, k)
                q = contract_oracle(sentence, lex, store.budget, store, k)
                worst = max(worst, float(np.abs(p - q).max()))
                checked += 1
    ok = criterion(3, worst < 1e-8, f"{checked} comparisons, max |delta| {worst:.2e}")
    assert ok


def test_criterion_4_training_convergence(criterion):
    cfg, entries = parse_lexicon(bundled("food_it"))
    lex = as_lexicon(entries)
    accuracies, decreased = [], 0
    start = time.perf_counter()
    for seed in range(20):
        ds = generate_dataset(cfg, entries, 16, seed=seed)
        keys = {(w, lex[w]) for s in ds.sentences for w in s}
        store = ParameterStore.random(keys, QubitBudget.for_topics(2), 1, seed)
        report = fit(store, ds, SpsaConfig(seed=seed))
        accuracies.append(report.accuracy)
        decreased += report.losses[-1] < report.initial_loss
    elapsed = time.perf_counter() - start
    mean_acc = float(np.mean(accuracies))
    ok = criterion(4, mean_acc >= 0.85 and decreased >= 18,
                   f"mean accuracy {mean_acc:.3f} (min {min(accuracies):.3f}), "
                   f"loss decreased in {decreased}/20 runs, {elapsed:.0f}s")
    assert ok


def test_criterion_5_food_near_parity(food_runs, criterion):
    runs = read_report(food_runs[0]["bench.tsv"])
    means = {a: float(np.mean([g for g, _ in rows])) for a, rows in runs.items()}
    ratio = max(means.values()) / min(means.values())
    ok = criterion(5, all(m < 50 for m in means.values()) and ratio <= 2 and len(runs["sa"]) == 30,
                   f"mean guesses SA {means['sa']:.2f}, RGT {means['rgt']:.2f}, ratio {ratio:.2f}")
    assert ok


def test_criterion_6_headlines_sa_advantage(tmp_path, criterion):
    d = {n: str(tmp_path / n) for n in ("data.tsv", "model.txt", "bench.tsv")}
    cli("gen-dataset", "--grammar", "headlines", "--count", 105, "--seed", 0, "--dataset", d["data.tsv"])
    cli("train", "--grammar", "headlines", "--seed", 0, "--iterations", HEADLINE_ITERATIONS,
        "--dataset", d["data.tsv"], "--model", d["model.txt"])
    cli("benchmark", "--model", d["model.txt"], "--topics", POLITICS_TOPIC, "--runs", 30, "--seed", 0,
        "--max-guesses", 500, *HEADLINE_BOUNDS, "--report", d["bench.tsv"])
    runs = read_report(d["bench.tsv"])
    mean = {a: float(np.mean([g for g, _ in rows])) for a, rows in runs.items()}
    timeouts = {a: sum(t for _, t in rows) for a, rows in runs.items()}
    ok = criterion(6, mean["sa"] < mean["rgt"] and timeouts["sa"] <= timeouts["rgt"],
                   f"mean guesses SA {mean['sa']:.1f}, RGT {mean['rgt']:.1f}; "
                   f"timeouts SA {timeouts['sa']}, RGT {timeouts['rgt']}")
    assert ok


def test_criterion_7_annealing_kernel(criterion):
    schedule = all(temperature(t_i, t) == t_i / (t + 1) for t_i in (0.1, 1.0, 2.5) for t in range(50))
    rng = np.random.default_rng(7)
    freq = sum(accept(0.5, 0.8, 0.3, rng) for _ in range(100_000)) / 100_000
    cold = sum(accept(0.5, 0.8, 1e-12, rng) for _ in range(10_000))
    ok = criterion(7, schedule and abs(freq - math.exp(-1)) <= 0.01 and cold == 0,
                   f"schedule exact: {schedule}; downhill acceptance {freq:.4f} vs {math.exp(-1):.4f}; "
                   f"acceptances at T=1e-12: {cold}")
    assert ok


def test_criterion_8_determinism(food_runs, criterion):
    names = ("data.tsv", "model.txt", "bench.tsv")
    same = {n: open(food_runs[0][n], "rb").read() == open(food_runs[1][n], "rb").read() for n in names}
    ok = criterion(8, all(same.values()),
                   "byte-identical: " + ", ".join(f"{n} {'yes' if v else 'NO'}" for n, v in same.items()))
    assert ok
