"""Time partitions of [0, T], their mesh and the left-neighbour floor map.

Nodes are stored as exact rationals so that floor lookups never
misclassify a query that sits exactly on a node after float round trips.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

TimeLike = Union[int, float, Fraction]


def _to_fraction(t: TimeLike) -> Fraction:
    if isinstance(t, Fraction):
        return t
    return Fraction(t)


@dataclass(frozen=True)
class TimeGrid:
    """A finite partition of [0, T] containing both endpoints."""

    nodes: tuple

    def __post_init__(self):
        nodes = tuple(_to_fraction(t) for t in self.nodes)
        if len(nodes) < 2:
            raise ValueError("a grid needs at least the two endpoints")
        if nodes[0] != 0:
            raise ValueError("grid must start at 0")
        if any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ValueError("grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, T: TimeLike, M: int) -> "TimeGrid":
        """M+1 equally spaced nodes m*T/M."""
        if M < 1:
            raise ValueError(f"M must be a positive integer, got {M}")
        T = _to_fraction(T)
        if T <= 0:
            raise ValueError("horizon T must be positive")
        return cls(tuple(T * m / M for m in range(M + 1)))

    @property
    def horizon(self) -> Fraction:
        return self.nodes[-1]

    @property
    def n_steps(self) -> int:
        return len(self.nodes) - 1

    @property
    def float_nodes(self) -> np.ndarray:
        return np.array([float(t) for t in self.nodes])

    @property
    def step_sizes(self) -> tuple:
        return tuple(b - a for a, b in zip(self.nodes, self.nodes[1:]))

    def mesh(self) -> Fraction:
        """Largest gap between consecutive nodes."""
        return max(self.step_sizes)

    def floor_index(self, t: TimeLike) -> int:
        """Index of floor_node(t) in the node tuple."""
        t = _to_fraction(t)
        if t < 0 or t > self.horizon:
            raise ValueError(f"t={float(t)} outside [0, {float(self.horizon)}]")
        if t == 0:
            return 0
        # largest node strictly below t; at a node t itself this is the
        # previous node (half-open convention)
        idx = 0
        for i, node in enumerate(self.nodes):
            if node < t:
                idx = i
            else:
                break
        return idx

    def floor_node(self, t: TimeLike) -> Fraction:
        """max([0, t) intersected with the grid); 0 maps to 0."""
        return self.nodes[self.floor_index(t)]


def uniform_grid(T: TimeLike, M: int) -> TimeGrid:
    return TimeGrid.uniform(T, M)
