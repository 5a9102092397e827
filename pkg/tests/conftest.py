import time

import pytest

from kkl_observer import io, pipeline
from kkl_observer.config import resolve

_RESULTS = []


class Recorder:
    def __call__(self, number: int, passed: bool, detail: str, seconds: float | None = None) -> None:
        tag = "PASS" if passed else "FAIL"
        took = "" if seconds is None else f" ({seconds:.1f} s)"
        line = f"[{tag}] criterion {number:>2}: {detail}{took}"
        _RESULTS.append((number, line))
        print(line)


@pytest.fixture(scope="session")
def criterion():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_RESULTS):
        terminalreporter.write_line(line)


def run_pipeline(system: str, out_dir, **overrides):
    cfg = resolve({"system": system, "output_dir": str(out_dir)}, overrides, env={})
    start = time.perf_counter()
    pipeline.run_all(cfg)
    elapsed = time.perf_counter() - start
    fwd = io.read_json(out_dir / pipeline.FORWARD_REPORT)
    inv = io.read_json(out_dir / pipeline.INVERSE_REPORT)
    return cfg, {"pipeline": elapsed, "train": fwd["wall_time"] + inv["wall_time"], "forward": fwd, "inverse": inv}


@pytest.fixture(scope="session")
def duffing_reference(tmp_path_factory):
    """Default Duffing pipeline, seed 0, 20 in-domain test trajectories with N(0, 0.1) noise."""
    out = tmp_path_factory.mktemp("duffing_ref")
    cfg, timing = run_pipeline("duffing", out, **{"evaluation.n_test": 20})
    return cfg, out, timing
