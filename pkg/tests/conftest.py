import pytest

_REPORT = []


class CriterionReport:
    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.parts = []

    def check(self, label, ok, detail=""):
        self.parts.append((label, bool(ok), detail))
        return bool(ok)

    @property
    def passed(self):
        return bool(self.parts) and all(ok for _, ok, _ in self.parts)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        details = "; ".join(f"{label}: {'ok' if ok else 'FAILED'} {detail}".strip() for label, ok, detail in self.parts)
        return f"criterion {self.number:>2} [{status}] {self.title} | {details}"

    def finish(self):
        print(self.line())
        _REPORT.append(self)
        failed = [f"{label} ({detail})" for label, ok, detail in self.parts if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def criterion():
    return CriterionReport


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for rep in sorted(_REPORT, key=lambda r: r.number):
        terminalreporter.write_line(rep.line())
