import pytest

from flowplate import BoxDomain, FluidParams, build_grid, make_channel_flow, make_zero_flow
from flowplate.generator import assemble_A, assemble_gram


@pytest.fixture(scope="session")
def unit_box():
    return BoxDomain()


@pytest.fixture(scope="session")
def params():
    return FluidParams()


@pytest.fixture(scope="session")
def zero_system(unit_box, params):
    asm = assemble_A(build_grid(unit_box, 5), make_zero_flow(), params)
    return asm, assemble_gram(asm)


@pytest.fixture(scope="session")
def channel_system(unit_box, params):
    asm = assemble_A(build_grid(unit_box, 5), make_channel_flow(0.5), params)
    return asm, assemble_gram(asm)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(request):
    """Record and print a one-line outcome for an acceptance criterion."""

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip()
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
