"""Shared training runs for the acceptance suite.

Training is the expensive part, so every (environment, config, seed, demos)
cell is run at most once per session and reused by every criterion that
needs it.
"""
import time
from dataclasses import dataclass, replace

import pytest

from dexrl.algos import TrainConfig, train
from dexrl.demos import collect_demos
from dexrl.envs import EnvConfig

VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def verdict(n: int, ok: bool, detail: str) -> bool:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


@dataclass
class Run:
    result: object
    seconds: float

    @property
    def its(self):
        return self.result.iterations_to_success

    @property
    def curve(self):
        return self.result.curve


class RunCache:
    def __init__(self):
        self.runs: dict = {}
        self.demo_sets: dict = {}

    def demos(self, env: EnvConfig, n: int = 20, seed: int = 123):
        key = (env.digest(), n, seed)
        if key not in self.demo_sets:
            self.demo_sets[key] = collect_demos(env, n=n, seed=seed)
        return self.demo_sets[key]

    def train(self, env: EnvConfig, tc: TrainConfig, seed: int) -> Run:
        key = (repr(env), repr(tc), seed)
        if key not in self.runs:
            demos = self.demos(env) if tc.algo == "dapg" else None
            t0 = time.perf_counter()
            res = train(env, tc, seed, demos=demos)
            self.runs[key] = Run(res, time.perf_counter() - t0)
        return self.runs[key]

    def all_kls(self):
        return [r.kl for run in self.runs.values() for r in run.curve[1:]]


@pytest.fixture(scope="session")
def cache():
    return RunCache()


def scratch_config(max_iters: int) -> TrainConfig:
    base = TrainConfig()
    return replace(base, npg=replace(base.npg, max_iters=max_iters))


def dapg_config(max_iters: int) -> TrainConfig:
    base = TrainConfig(algo="dapg")
    return replace(base, dapg=replace(base.dapg, npg=replace(base.dapg.npg, max_iters=max_iters)))
