"""Run configuration: register widths, search budget multiplier, qubit cap.

The file format is flat ``key = value`` text with ``#`` comments::

    b = 8          # distance register width
    t = 10         # amplitude-estimation phase qubits (default b + 2)
    c = 1          # Grover budget multiplier
    qubit_cap = 26
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .qsim import DEFAULT_QUBIT_CAP


@dataclass(frozen=True)
class QknnConfig:
    b: int = 8
    t: int | None = None
    c: float = 1.0
    qubit_cap: int = DEFAULT_QUBIT_CAP

    def __post_init__(self):
        if self.b < 1:
            raise ValueError(f"distance register width b must be >= 1, got {self.b}")
        if self.t is not None and self.t < 1:
            raise ValueError(f"phase register width t must be >= 1, got {self.t}")
        if self.c <= 0:
            raise ValueError(f"budget multiplier c must be positive, got {self.c}")

    @property
    def phase_qubits(self) -> int:
        return self.t if self.t is not None else self.b + 2

    def with_(self, **changes) -> "QknnConfig":
        return replace(self, **changes)

    @classmethod
    def from_text(cls, text: str) -> "QknnConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.read_string("[qknn]\n" + text)
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in parser["qknn"].items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}; expected one of {sorted(known)}")
            kwargs[key] = float(raw) if key == "c" else int(raw)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "QknnConfig":
        return cls.from_text(Path(path).read_text())
