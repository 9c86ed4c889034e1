import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("qmux", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("qmux")


@pytest.fixture(scope="session")
def noiseless_cfg():
    from qmux.config import load_preset
    return load_preset("noiseless")


@pytest.fixture(scope="session")
def common_cfg():
    from qmux.config import load_preset
    return load_preset("common-clock")


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion for the end-of-run summary."""
    results = request.config.stash.setdefault(_ACCEPTANCE, {})

    class _Recorder:
        def __init__(self):
            self.number = None

        def __call__(self, number: int, title: str):
            self.number = number
            results[number] = (title, "FAIL", "")
            return self

        def passed(self, detail: str = ""):
            title = results[self.number][0]
            results[self.number] = (title, "PASS", detail)
            print(f"criterion {self.number:>2} PASS  {title}  {detail}")

    return _Recorder()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, status, detail = results[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}" + (f"  [{detail}]" if detail else ""))
