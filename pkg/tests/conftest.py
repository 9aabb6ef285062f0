import sys
from pathlib import Path

# lets test modules import the shared helpers module
sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:].split("-")[0].rstrip("ab"))):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}: {detail}")
