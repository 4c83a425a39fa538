import pytest

from torus_noc.faults import inject_faults
from torus_noc.topology import TorusTopology

# lines collected by the acceptance suite, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def torus8():
    return TorusTopology(8, 8)


@pytest.fixture
def faulty8(torus8):
    return inject_faults(torus8, 0.3, 11)


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory):
    """One default-length training run through the CLI; shared by several modules."""
    from torus_noc.cli import main
    from torus_noc.nn import Checkpoint

    out = tmp_path_factory.mktemp("train_a")
    assert main(["train", "--seed", "0", "--out", str(out)]) == 0
    return out, Checkpoint.load(out / "checkpoint.json")


@pytest.fixture(scope="session")
def trained(trained_run):
    return trained_run[1]
