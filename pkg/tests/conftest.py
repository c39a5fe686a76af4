import sys

import pytest

from tricoil.actuation import DirectModel, LibraryConfig, build_field_map_for, build_library


@pytest.fixture(scope="session")
def default_cfg():
    return LibraryConfig()


@pytest.fixture(scope="session")
def default_fmap(default_cfg):
    return build_field_map_for(default_cfg)


@pytest.fixture(scope="session")
def default_lib(default_cfg, default_fmap):
    return build_library(default_cfg, default_fmap)


@pytest.fixture(scope="session")
def direct(default_cfg):
    """Exact loop-superposition model, no interpolation."""
    return DirectModel(default_cfg)



def pytest_terminal_summary(terminalreporter):
    """Print the acceptance criteria verdicts collected by test_acceptance."""
    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
