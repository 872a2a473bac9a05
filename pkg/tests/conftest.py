import sys
from pathlib import Path

import pytest

from mcefs.corpus import AbscInstance, Corpus, Polarity, parse_semeval
from mcefs.protocol import default_templates

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(Path(__file__).parent))


def load_mini(name="14-Laptop") -> Corpus:
    train = parse_semeval((FIXTURES / "mini_train.xml").read_bytes(), "train")
    test = parse_semeval((FIXTURES / "mini_test.xml").read_bytes(), "test")
    return Corpus(name, train, test)


def inst(sentence, aspect, polarity, sid=None):
    return AbscInstance(sentence, aspect, Polarity(polarity), sid or f"t/{sentence[:8]}#{aspect}")


@pytest.fixture
def mini_corpus():
    return load_mini()


@pytest.fixture
def templates():
    return default_templates()


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if not RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for status, name, detail in RESULTS:
        terminalreporter.write_line(f"{status:4}  {name}: {detail}")
