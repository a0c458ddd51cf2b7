import time

import pytest

from channel_stab.cli import main


@pytest.fixture(scope="session")
def default_sweep(tmp_path_factory):
    """The CLI default resolvent sweep, run once per session: (output dir, exit code, seconds)."""
    root = tmp_path_factory.mktemp("default_sweep")
    t0 = time.perf_counter()
    code = main(["--output-dir", str(root), "--log-level", "WARNING", "resolvent"])
    return root / "default" / "resolvent", code, time.perf_counter() - t0
