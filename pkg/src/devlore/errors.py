"""Base exception type for the harness.

Concrete error classes live next to the code that raises them; they all
subclass HarnessError so callers can catch harness failures in one clause
without swallowing programming errors.
"""


class HarnessError(Exception):
    """Base class for every error raised by this package."""
