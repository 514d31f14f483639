import pytest

from fluxccz.composite import DressedModel, dressed_model, paper_device

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {criterion} [{name}]: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture(scope="session")
def dressed10(request):
    """10 levels per subsystem, 128 kept states; cached between runs in the pytest cache."""
    path = request.config.cache.mkdir("fluxccz") / "dressed-10-128.npz"
    if path.exists():
        return DressedModel.load(path)
    model = dressed_model(paper_device(), 10, 128)
    model.save(path)
    return model


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
