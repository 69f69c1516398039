"""Cell search spaces: architecture encoding, enumeration, mutation, distance."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import CapacityError, InvalidArgumentError
from .nn import OpKind

ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class SearchSpace:
    """A fully connected DAG cell: one op choice per edge (i, j), i < j."""

    name: str
    n_nodes: int
    ops: tuple[OpKind, ...]

    def __post_init__(self):
        if self.n_nodes < 2:
            raise InvalidArgumentError("a cell needs at least two nodes")
        if not self.ops:
            raise InvalidArgumentError("empty op list")

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        # Ordered by target node, then source: (0,1), (0,2), (1,2), (0,3), ...
        return tuple((i, j) for j in range(1, self.n_nodes) for i in range(j))

    @property
    def n_edges(self) -> int:
        return self.n_nodes * (self.n_nodes - 1) // 2

    @property
    def size(self) -> int:
        return len(self.ops) ** self.n_edges

    def validate(self, arch: Architecture) -> None:
        if len(arch) != self.n_edges:
            raise InvalidArgumentError(
                f"architecture {arch} has {len(arch)} codes, space {self.name!r} has {self.n_edges} edges")
        if any(c < 0 or c >= len(self.ops) for c in arch.codes):
            raise InvalidArgumentError(f"architecture {arch} has codes outside 0..{len(self.ops) - 1}")


@dataclass(frozen=True, order=True)
class Architecture:
    codes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "codes", tuple(int(c) for c in self.codes))

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self):
        return iter(self.codes)

    def __getitem__(self, k):
        return self.codes[k]

    def __str__(self) -> str:
        return "-".join(str(c) for c in self.codes)

    @classmethod
    def parse(cls, text: str) -> Architecture:
        try:
            return cls(tuple(int(tok) for tok in text.strip().split("-")))
        except ValueError:
            raise InvalidArgumentError(f"not an architecture string: {text!r}") from None


_BUILTIN = {
    "micro": (3, (OpKind.ZERO, OpKind.IDENTITY, OpKind.LINEAR, OpKind.RELU_LINEAR)),
    "small": (4, tuple(OpKind)),
}
BUILTIN_SPACES = tuple(_BUILTIN)


def builtin_space(name: str) -> SearchSpace:
    try:
        n_nodes, ops = _BUILTIN[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown search space {name!r}; known: {sorted(_BUILTIN)}") from None
    return SearchSpace(name, n_nodes, ops)


def random_architecture(space: SearchSpace, rng: np.random.Generator) -> Architecture:
    return Architecture(tuple(rng.integers(0, len(space.ops), size=space.n_edges)))


def mutate(space: SearchSpace, a: Architecture, rng: np.random.Generator) -> Architecture:
    """Change exactly one position to a different op, uniformly."""
    if len(space.ops) < 2:
        raise InvalidArgumentError("mutation needs at least two ops")
    pos = int(rng.integers(len(a)))
    shift = int(rng.integers(1, len(space.ops)))
    codes = list(a.codes)
    codes[pos] = (codes[pos] + shift) % len(space.ops)
    return Architecture(tuple(codes))


def hamming_distance(a: Sequence[int], b: Sequence[int]) -> int:
    if len(a) != len(b):
        raise InvalidArgumentError(f"length mismatch: {len(a)} vs {len(b)}")
    return sum(x != y for x, y in zip(a, b))


def enumerate_space(space: SearchSpace, cap: int = ENUMERATION_CAP) -> Iterator[Architecture]:
    """All architectures in lexicographic code order."""
    if space.size > cap:
        raise CapacityError(f"space {space.name!r} has {space.size} architectures (cap {cap})")
    return (Architecture(codes)
            for codes in itertools.product(range(len(space.ops)), repeat=space.n_edges))


def count_beyond(space: SearchSpace, tau: int) -> int:
    """Number of architectures at Hamming distance > tau from any fixed root."""
    E, k = space.n_edges, len(space.ops) - 1
    return sum(math.comb(E, r) * k**r for r in range(tau + 1, E + 1))
