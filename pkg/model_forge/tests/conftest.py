import colorsys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(label): marks a test as one acceptance criterion; "
        "each gets its own pass/fail line in the terminal summary",
    )
    # Another collected test tree may carry an identical conftest; share
    # one outcome list so labels appear exactly once.
    if not hasattr(config, "_criterion_outcomes"):
        config._criterion_outcomes = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or getattr(report, "_criterion_logged", False):
        return
    label = marker.args[0]
    if report.when == "call":
        report._criterion_logged = True
        word = "PASS" if report.passed else "FAIL"
        item.config._criterion_outcomes.append((label, word))
    elif report.when == "setup" and not report.passed:
        report._criterion_logged = True
        word = "SKIP" if report.skipped else "FAIL"
        item.config._criterion_outcomes.append((label, word))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = getattr(config, "_criterion_outcomes", [])
    if not outcomes:
        return
    config._criterion_outcomes = []
    terminalreporter.section("acceptance criteria")
    for label, word in outcomes:
        terminalreporter.write_line(f"[{word}] {label}")


def build_prepared(
    root: Path,
    n_subjects: int,
    per_class: int,
    *,
    seed: int = 5,
    size: int = 64,
) -> Path:
    """Paint a synthetic prepared dataset: distinct hue per subject,
    noisy fill, and a light band over the lower face on masked images."""
    rng = np.random.default_rng(seed)
    (root / "with_mask").mkdir(parents=True, exist_ok=True)
    (root / "without_mask").mkdir(parents=True, exist_ok=True)
    band_top = int(size * 0.55)
    for s in range(n_subjects):
        r, g, b = colorsys.hsv_to_rgb(s / n_subjects, 0.65, 0.80)
        hue = np.array([r * 255, g * 255, b * 255], dtype=np.int16)
        for copy in range(per_class):
            noise = rng.integers(-18, 19, (size, size, 3), dtype=np.int16)
            base = np.clip(hue + noise, 0, 255).astype(np.uint8)
            Image.fromarray(base).save(root / "without_mask" / f"s{s}__u{copy:03d}.png")
            masked = base.copy()
            masked[band_top : size - 4, 4 : size - 4] = (205, 215, 225)
            Image.fromarray(masked).save(root / "with_mask" / f"s{s}__m{copy:03d}.png")
    return root


@pytest.fixture
def prepared_factory(tmp_path):
    """Builds a synthetic prepared dataset under a unique directory."""
    counter = {"n": 0}

    def build(n_subjects: int, per_class: int, **kwargs) -> Path:
        counter["n"] += 1
        return build_prepared(tmp_path / f"set{counter['n']}", n_subjects, per_class, **kwargs)

    return build
