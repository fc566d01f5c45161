"""Shared fixtures and the acceptance summary printed after the run."""
import hashlib
import json
from dataclasses import asdict

import pytest

ACCEPTANCE = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{n:2d}] {title}: {detail}")


@pytest.fixture(scope="session")
def trained(request):
    """``trained(cfg, reference=False)`` returns a trained System, cached on disk.

    The cache key hashes the full config, so changing any setting retrains.
    Delete ``.pytest_cache`` (or run with ``--cache-clear``) to retrain
    everything from scratch.
    """
    from vvshape.system import load_system, save_system
    from vvshape.trainer import qam_reference, train

    root = request.config.cache.mkdir("trained-systems")
    memo = {}

    def get(cfg, reference=False):
        key = hashlib.sha256(json.dumps([asdict(cfg), reference], sort_keys=True,
                                        default=str).encode()).hexdigest()[:16]
        if key in memo:
            return memo[key]
        path = root / key
        if (path / "system.ini").is_file():
            system = load_system(path)
        else:
            system = (qam_reference(cfg) if reference else train(cfg)).system
            save_system(system, path)
        memo[key] = system
        return system
    return get
