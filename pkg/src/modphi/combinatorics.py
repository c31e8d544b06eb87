"""Integer partitions, Stirling numbers and truncated exp/log of power series.

Everything here is exact integer arithmetic except the series routines, which
work on float arrays. Series coefficients live on the last axis, so a stack of
series (one per quadrature node, say) is processed in one call.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InputError

__all__ = [
    "IntegerPartition",
    "StirlingTable",
    "ascending_compositions",
    "partitions_with_min_part",
    "partition_count",
    "z_lambda",
    "stirling_table",
    "series_exp",
    "series_log",
]


@dataclass(frozen=True)
class IntegerPartition:
    """A partition of ``size`` into positive, non-increasing ``parts``."""

    parts: tuple[int, ...]
    size: int = field(default=-1)

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        object.__setattr__(self, "parts", parts)
        if any(p <= 0 for p in parts):
            raise InputError(f"partition parts must be positive, got {parts}")
        if any(a < b for a, b in zip(parts, parts[1:])):
            raise InputError(f"partition parts must be non-increasing, got {parts}")
        total = sum(parts)
        if self.size == -1:
            object.__setattr__(self, "size", total)
        elif self.size != total:
            raise InputError(f"parts {parts} do not sum to declared size {self.size}")

    @property
    def length(self) -> int:
        return len(self.parts)

    @property
    def multiplicities(self) -> dict[int, int]:
        return dict(Counter(self.parts))

    def __iter__(self):
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)


def ascending_compositions(k: int):
    """Yield every partition of ``k`` as an ascending list of parts.

    Kelleher's accelerated generator; each partition is produced once, in
    lexicographic order of the ascending encoding.
    """
    if k < 1:
        return
    a = [0] * (k + 1)
    i = 1
    a[1] = k
    while i != 0:
        x = a[i - 1] + 1
        y = a[i] - 1
        i -= 1
        while x <= y:
            a[i] = x
            y -= x
            i += 1
        j = i + 1
        while x <= y:
            a[i] = x
            a[j] = y
            yield a[: i + 2]
            x += 1
            y -= 1
        a[i] = x + y
        y = x + y - 1
        yield a[: i + 1]


@lru_cache(maxsize=None)
def _partitions_cached(k: int, min_part: int) -> tuple[IntegerPartition, ...]:
    # ascending encoding: the smallest part is the first one, so the
    # acceptance test is a single comparison
    accepted = [
        tuple(reversed(asc)) for asc in ascending_compositions(k) if asc[0] >= min_part
    ]
    accepted.sort()
    return tuple(IntegerPartition(p, k) for p in accepted)


def partitions_with_min_part(k: int, min_part: int = 1) -> tuple[IntegerPartition, ...]:
    """All partitions of ``k`` whose parts are all at least ``min_part``.

    Partitions come back sorted lexicographically on their non-increasing
    part lists. Degenerate inputs give an empty tuple.
    """
    if k < 1 or min_part < 1 or min_part > k:
        return ()
    return _partitions_cached(int(k), int(min_part))


def partition_count(k: int) -> int:
    """Partition function p(k) from Euler's pentagonal recurrence."""
    if k < 0:
        return 0
    p = [1] + [0] * k
    for m in range(1, k + 1):
        total = 0
        j = 1
        while True:
            g1 = j * (3 * j - 1) // 2
            if g1 > m:
                break
            sign = 1 if j % 2 else -1
            total += sign * p[m - g1]
            g2 = j * (3 * j + 1) // 2
            if g2 <= m:
                total += sign * p[m - g2]
            j += 1
        p[m] = total
    return p[k]


def z_lambda(p: IntegerPartition | tuple[int, ...]) -> int:
    """Centraliser size ``prod_k k**m_k * m_k!`` of a partition.

    Computed exactly as a Python integer. Callers that need a float should go
    through :func:`float`, which raises ``OverflowError`` beyond the double range.
    """
    if not isinstance(p, IntegerPartition):
        p = IntegerPartition(tuple(p))
    z = 1
    for part, mult in p.multiplicities.items():
        z *= part**mult * math.factorial(mult)
    return z


@dataclass(frozen=True)
class StirlingTable:
    """Unsigned first-kind and second-kind Stirling numbers up to ``max_size``.

    ``first_kind[l][m]`` counts permutations of ``l`` elements with ``m``
    cycles; ``second_kind[r][s]`` counts set partitions of ``r`` elements
    into ``s`` blocks. Rows are indexed from 0.
    """

    max_size: int
    first_kind: tuple[tuple[int, ...], ...]
    second_kind: tuple[tuple[int, ...], ...]

    def first(self, l: int, m: int) -> int:
        if m < 0 or m > l:
            return 0
        return self.first_kind[l][m]

    def second(self, r: int, s: int) -> int:
        if s < 0 or s > r:
            return 0
        return self.second_kind[r][s]

    def first_kind_array(self) -> np.ndarray:
        """First-kind numbers as a float matrix; raises OverflowError if unrepresentable."""
        return _to_float_matrix(self.first_kind)

    def second_kind_array(self) -> np.ndarray:
        return _to_float_matrix(self.second_kind)


def _to_float_matrix(rows) -> np.ndarray:
    size = len(rows)
    out = np.zeros((size, size))
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            out[i, j] = float(v)
    return out


@lru_cache(maxsize=32)
def stirling_table(R: int) -> StirlingTable:
    """Fill both Stirling triangles up to index ``R`` with the two-term recurrences."""
    if R < 1:
        raise InputError(f"stirling_table needs R >= 1, got {R}")
    c = [[0] * (R + 1) for _ in range(R + 1)]
    S = [[0] * (R + 1) for _ in range(R + 1)]
    c[0][0] = S[0][0] = 1
    for n in range(1, R + 1):
        for k in range(1, n + 1):
            c[n][k] = c[n - 1][k - 1] + (n - 1) * c[n - 1][k]
            S[n][k] = S[n - 1][k - 1] + k * S[n - 1][k]
    return StirlingTable(
        R,
        tuple(tuple(row[: i + 1]) for i, row in enumerate(c)),
        tuple(tuple(row[: i + 1]) for i, row in enumerate(S)),
    )


def series_exp(g) -> np.ndarray:
    """Coefficients of ``exp(g(z))`` truncated at the degree of ``g``.

    ``g`` holds ordinary power-series coefficients ``g_0..g_R`` on its last
    axis and must have ``g_0 = 0``. Uses ``n h_n = sum_k k g_k h_{n-k}``.
    """
    g = np.asarray(g, dtype=float)
    if g.shape[-1] < 1:
        raise InputError("series must have at least one coefficient")
    if np.any(g[..., 0] != 0.0):
        raise InputError("series_exp requires a zero constant term")
    R = g.shape[-1] - 1
    h = np.zeros_like(g)
    h[..., 0] = 1.0
    k = np.arange(R + 1, dtype=float)
    kg = k * g
    for n in range(1, R + 1):
        h[..., n] = np.sum(kg[..., 1 : n + 1] * h[..., n - 1 :: -1][..., :n], axis=-1) / n
    return h


def series_log(h) -> np.ndarray:
    """Coefficients of ``log(h(z))`` truncated at the degree of ``h``; needs ``h_0 = 1``."""
    h = np.asarray(h, dtype=float)
    if h.shape[-1] < 1:
        raise InputError("series must have at least one coefficient")
    if np.any(h[..., 0] != 1.0):
        raise InputError("series_log requires a unit constant term")
    R = h.shape[-1] - 1
    g = np.zeros_like(h)
    k = np.arange(R + 1, dtype=float)
    for n in range(1, R + 1):
        # n g_n = n h_n - sum_{k=1}^{n-1} k g_k h_{n-k}
        acc = np.sum((k[1:n] * g[..., 1:n]) * h[..., n - 1 : 0 : -1], axis=-1)
        g[..., n] = h[..., n] - acc / n
    return g
