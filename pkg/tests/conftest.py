import pytest

from mapkurator.synth import SynthSpec, generate


@pytest.fixture(scope="session")
def synth_fixture(tmp_path_factory):
    """Acceptance fixture: seed 42, 3000x2000, 50 labels, separated vocabulary."""
    out = tmp_path_factory.mktemp("synth42")
    return generate(SynthSpec(seed=42, width_px=3000, height_px=2000, n_labels=50, separated_vocab=True), out)


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth_small")
    return generate(SynthSpec(seed=3, width_px=1200, height_px=900, n_labels=12, separated_vocab=True), out)


_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    number, title = _criterion_from(report)
    if number is None:
        return
    status = "PASS" if report.passed else "FAIL"
    if _criteria.get(number, ("", "PASS"))[1] == "FAIL":
        status = "FAIL"  # one failing parametrization fails the criterion
    _criteria[number] = (title, status)


def _criterion_from(report):
    for name, value in report.user_properties:
        if name == "criterion":
            return value
    return None, None


def pytest_collection_modifyitems(items):
    # attached at collection so that fixture setup errors are still attributed
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            item.user_properties.append(("criterion", tuple(marker.args)))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")
