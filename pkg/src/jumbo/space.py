"""Mixed continuous / integer / categorical search spaces.

Optimisation happens in a relaxed continuous box; ``SearchSpace.transform``
maps a relaxed point to its encoded representation (integers rounded,
categoricals one-hot) before any kernel or network sees it.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, ParseError

_BOX_TOL = 1e-9


@dataclass(frozen=True)
class Continuous:
    lo: float
    hi: float
    width = 1

    def token(self):
        return f"c({self.lo!r},{self.hi!r})"


@dataclass(frozen=True)
class Integer:
    lo: int
    hi: int
    width = 1

    def token(self):
        return f"i({self.lo},{self.hi})"


@dataclass(frozen=True)
class Categorical:
    n: int

    @property
    def width(self):
        return self.n

    def token(self):
        return f"k({self.n})"


@dataclass(frozen=True)
class SearchSpace:
    specs: tuple

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        if not self.specs:
            raise InvalidArgument("search space needs at least one variable")
        for s in self.specs:
            if isinstance(s, Categorical):
                if s.n < 2:
                    raise InvalidArgument(f"categorical needs n >= 2, got {s.n}")
            elif isinstance(s, (Continuous, Integer)):
                if not s.lo < s.hi:
                    raise InvalidArgument(f"need lo < hi, got ({s.lo}, {s.hi})")
            else:
                raise InvalidArgument(f"unknown variable spec {s!r}")

    @classmethod
    def unit_box(cls, d: int) -> "SearchSpace":
        return cls(tuple(Continuous(0.0, 1.0) for _ in range(d)))

    @property
    def encoded_dim(self) -> int:
        return sum(s.width for s in self.specs)

    @property
    def is_continuous(self) -> bool:
        return all(isinstance(s, Continuous) for s in self.specs)

    def bounds(self):
        """Lower and upper corners of the relaxed box."""
        lo, hi = [], []
        for s in self.specs:
            if isinstance(s, Categorical):
                lo += [0.0] * s.n
                hi += [1.0] * s.n
            else:
                lo.append(float(s.lo))
                hi.append(float(s.hi))
        return np.array(lo), np.array(hi)

    def transform(self, x):
        """Map relaxed points (rows) to encoded points. Idempotent."""
        X = np.array(x, dtype=np.float64, ndmin=2)
        if X.shape[1] != self.encoded_dim:
            raise InvalidArgument(f"expected {self.encoded_dim} coordinates, got {X.shape[1]}")
        lo, hi = self.bounds()
        if not np.all(np.isfinite(X)) or np.any(X < lo - _BOX_TOL) or np.any(X > hi + _BOX_TOL):
            raise InvalidArgument("point lies outside the relaxed box")
        out = X.copy()
        j = 0
        for s in self.specs:
            if isinstance(s, Integer):
                out[:, j] = np.floor(X[:, j] + 0.5)
            elif isinstance(s, Categorical):
                block = X[:, j:j + s.n]
                onehot = np.zeros_like(block)
                onehot[np.arange(len(block)), np.argmax(block, axis=1)] = 1.0
                out[:, j:j + s.n] = onehot
            j += s.width
        return out if np.ndim(x) == 2 else out[0]

    def to_unit(self, X):
        """Affine map of encoded points into the unit cube (one-hot blocks untouched)."""
        lo, hi = self.bounds()
        return (np.asarray(X, dtype=np.float64) - lo) / (hi - lo)

    def header(self) -> str:
        return " ".join(s.token() for s in self.specs)

    @classmethod
    def parse(cls, text: str, line: int | None = None) -> "SearchSpace":
        specs = []
        for tok in text.split():
            m = re.fullmatch(r"([cik])\(([^)]*)\)", tok)
            if not m:
                raise ParseError(f"bad space token {tok!r}", line)
            kind, args = m.group(1), [a.strip() for a in m.group(2).split(",")]
            try:
                if kind == "c" and len(args) == 2:
                    lo, hi = float(args[0]), float(args[1])
                    if not (math.isfinite(lo) and math.isfinite(hi)):
                        raise ValueError
                    specs.append(Continuous(lo, hi))
                elif kind == "i" and len(args) == 2:
                    specs.append(Integer(int(args[0]), int(args[1])))
                elif kind == "k" and len(args) == 1:
                    specs.append(Categorical(int(args[0])))
                else:
                    raise ValueError
            except ValueError:
                raise ParseError(f"bad arguments in space token {tok!r}", line) from None
        try:
            return cls(tuple(specs))
        except InvalidArgument as exc:
            raise ParseError(str(exc), line) from None


def transform_T(space: SearchSpace, x_relaxed):
    return space.transform(x_relaxed)
