"""Shared, session-cached simulation runs driven through the CLI."""

from pathlib import Path

import pytest

from wiou_lab import cli, io

DESK_LOSSES = ("giou", "diou", "ciou", "eiou", "siou", "wiou1")
PARALLEL_WORKERS = 4


class SimCache:
    def __init__(self, root: Path):
        self.root = root
        self._done: dict[tuple, Path] = {}

    def __call__(self, radius: float, subsample: float, seed: int, workers: int = 1) -> Path:
        key = (radius, subsample, seed, workers)
        if key not in self._done:
            out = self.root / f"r{radius:g}_s{subsample:g}_seed{seed}_w{workers}"
            argv = [
                "simulate",
                "--r", str(radius),
                "--subsample", str(subsample),
                "--seed", str(seed),
                "--iters", "200",
                "--lr", "0.01",
                "--losses", ",".join(DESK_LOSSES),
                "--workers", str(workers),
                "--out", str(out),
            ]
            assert cli.main(argv) == 0
            self._done[key] = out
        return self._done[key]

    def curves(self, *args, **kwargs):
        out = self(*args, **kwargs)
        return {name: io.read_curve(out / f"curve_{name}.csv") for name in DESK_LOSSES}


@pytest.fixture(scope="session")
def sim_cache(tmp_path_factory) -> SimCache:
    return SimCache(tmp_path_factory.mktemp("sims"))


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool | None, detail: str) -> None:
    status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
    line = f"criterion {number:>2}: {status}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
