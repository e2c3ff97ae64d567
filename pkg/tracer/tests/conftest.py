"""Shared fixtures: a small sample project the tracer runs against.

lib/shapes.py is exactly 30 lines and its call graph is enumerable by hand,
which the conformance tests rely on. lib/spin.py exists to generate a long
step trace for the kill-mid-run test.
"""
from __future__ import annotations

import sys
from pathlib import Path

import pytest

SHAPES_SRC = '''\
"""Tiny geometry helpers exercised by the tracer tests."""
PI = 3.14159


def rect_area(width, height):
    size = width * height
    return size


def circle_area(radius):
    return PI * radius * radius


def total_area(shapes):
    total = 0.0
    for kind, first, second in shapes:
        if kind == "rect":
            total += rect_area(first, second)
        else:
            total += circle_area(first)
    return total


class Tally:
    def __init__(self):
        self.count = 0

    def add(self, amount):
        self.count = self.count + amount
        return self.count
'''

SPIN_SRC = '''\
def churn(steps):
    total = 0
    for index in range(steps):
        total = total + index
    return total
'''

TEST_SHAPES_SRC = '''\
import unittest

from lib.shapes import Tally, total_area


class ShapesTest(unittest.TestCase):
    def test_mixed_total(self):
        value = total_area([("rect", 2, 3), ("circle", 1, 0)])
        self.assertAlmostEqual(value, 9.14159, places=5)

    def test_tally_counts(self):
        tally = Tally()
        tally.add(2)
        self.assertEqual(tally.add(3), 5)

    def test_wrong_total(self):
        self.assertEqual(total_area([("rect", 2, 2)]), 5)
'''

TEST_SPIN_SRC = '''\
import unittest

from lib.spin import churn


class SpinTest(unittest.TestCase):
    def test_churn_many(self):
        self.assertGreater(churn(2000000), 0)
'''

SAMPLE_FILES = {
    "lib/__init__.py": "",
    "lib/shapes.py": SHAPES_SRC,
    "lib/spin.py": SPIN_SRC,
    "sampletests/__init__.py": "",
    "sampletests/test_shapes.py": TEST_SHAPES_SRC,
    "sampletests/test_spin.py": TEST_SPIN_SRC,
}

PASSING_TESTS = (
    "sampletests.test_shapes.ShapesTest.test_mixed_total",
    "sampletests.test_shapes.ShapesTest.test_tally_counts",
)
FAILING_TEST = "sampletests.test_shapes.ShapesTest.test_wrong_total"
SPIN_TEST = "sampletests.test_spin.SpinTest.test_churn_many"


def write_sample_project(root: Path) -> Path:
    for rel, source in SAMPLE_FILES.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(source, encoding="utf-8")
    return root


@pytest.fixture(scope="session")
def sample_workspace(tmp_path_factory) -> Path:
    return write_sample_project(tmp_path_factory.mktemp("sample-workspace"))


@pytest.fixture()
def clean_modules():
    """Undo sys.path/sys.modules changes made by in-process test loading."""
    saved_path = list(sys.path)
    saved_keys = set(sys.modules)
    yield
    sys.path[:] = saved_path
    for key in list(sys.modules):
        if key not in saved_keys:
            del sys.modules[key]
