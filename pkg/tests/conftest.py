import os

# keep BLAS single-threaded unless a test asks otherwise
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

CRITERIA: dict = {}


def record(key: str, ok: bool, detail: str):
    CRITERIA.setdefault(key, []).append((ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA, key=lambda k: [int(t) if t.isdigit() else t for t in k.replace(".", " ").split()]):
        for ok, detail in CRITERIA[key]:
            terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
