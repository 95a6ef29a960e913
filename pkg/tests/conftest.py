from importlib import resources

import numpy as np
import pytest

from qnlg.compiler import ParameterStore, QubitBudget
from qnlg.grammar import as_lexicon, generate_dataset, parse_lexicon
from qnlg.train import SpsaConfig, fit

TOY = """\
S -> N V N
N -> Alice | language
V -> generates
Alice :: n
language :: n
generates :: n.r s n.l
"""


def bundled(name):
    return (resources.files("qnlg") / "data" / f"{name}.grammar").read_text()


@pytest.fixture
def toy():
    cfg, entries = parse_lexicon(TOY)
    return cfg, entries, as_lexicon(entries)


@pytest.fixture(scope="session")
def food():
    cfg, entries = parse_lexicon(bundled("food_it"))
    return cfg, entries, as_lexicon(entries)


@pytest.fixture(scope="session")
def headlines():
    cfg, entries = parse_lexicon(bundled("headlines"))
    return cfg, entries, as_lexicon(entries)


def random_store(lexicon, k, seed, depth=1):
    return ParameterStore.random(list(lexicon.items()), QubitBudget.for_topics(k), depth, seed)


@pytest.fixture(scope="session")
def food_model(food):
    """Small trained 2-topic classifier shared by the generation tests."""
    cfg, entries, lexicon = food
    ds = generate_dataset(cfg, entries, 16, seed=0)
    store = random_store(lexicon, 2, seed=0)
    report = fit(store, ds, SpsaConfig(iterations=200, seed=0))
    return report.store, ds


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
