"""Bundled data files."""

from pathlib import Path


def sample_path() -> Path:
    """Path of the bundled sample dataset (16 annotated questions)."""
    return Path(__file__).parent / "sample.stemstep"
