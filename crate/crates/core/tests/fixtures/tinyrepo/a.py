"""Top-level helpers for tinyrepo."""


def greet(name):
    """Return a greeting for name."""
    return f"hello, {name}"
