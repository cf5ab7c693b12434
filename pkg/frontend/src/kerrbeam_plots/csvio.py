"""Strict CSV reading for plot inputs."""

from __future__ import annotations

import csv

import numpy as np


class MissingColumnError(KeyError):
    """A referenced CSV column is absent."""

    def __init__(self, path: str, column: str, available: list[str]):
        self.path = path
        self.column = column
        super().__init__(
            f"{path}: missing column {column!r} (has: {', '.join(available)})")

    def __str__(self) -> str:  # KeyError quotes its args; keep it readable
        return self.args[0]


def read_csv(path: str, required: tuple[str, ...] = ()) -> dict[str, np.ndarray]:
    """Read a headed CSV into float64 column arrays.

    Raises MissingColumnError if any name in `required` is absent, and
    ValueError for an empty or headerless file.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        rows = [row for row in reader if row]
    for name in required:
        if name not in header:
            raise MissingColumnError(path, name, header)
    data = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}
