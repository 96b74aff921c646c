"""
Finite unions of real intervals with open/closed endpoints.

Used for cumulative identified sets, which can be unbounded and can
consist of several disjoint pieces.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

INF = math.inf


@dataclass(frozen=True)
class Interval:
    """A single interval; infinite endpoints are always open."""

    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        if math.isinf(self.lo):
            object.__setattr__(self, 'lo_closed', False)
        if math.isinf(self.hi):
            object.__setattr__(self, 'hi_closed', False)

    @classmethod
    def point(cls, x: float) -> 'Interval':
        return cls(x, x, True, True)

    @property
    def is_empty(self) -> bool:
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and not (self.lo_closed and self.hi_closed)

    @property
    def bounded(self) -> bool:
        return not (math.isinf(self.lo) or math.isinf(self.hi))

    def __contains__(self, x: float) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and not self.lo_closed:
            return False
        if x == self.hi and not self.hi_closed:
            return False
        return True

    def intersect(self, other: 'Interval') -> 'Interval':
        if self.lo > other.lo:
            lo, lo_closed = self.lo, self.lo_closed
        elif self.lo < other.lo:
            lo, lo_closed = other.lo, other.lo_closed
        else:
            lo, lo_closed = self.lo, self.lo_closed and other.lo_closed
        if self.hi < other.hi:
            hi, hi_closed = self.hi, self.hi_closed
        elif self.hi > other.hi:
            hi, hi_closed = other.hi, other.hi_closed
        else:
            hi, hi_closed = self.hi, self.hi_closed and other.hi_closed
        return Interval(lo, hi, lo_closed, hi_closed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lo": "-inf" if self.lo == -INF else self.lo,
            "hi": "+inf" if self.hi == INF else self.hi,
            "lo_closed": self.lo_closed,
            "hi_closed": self.hi_closed,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'Interval':
        return cls(_parse_bound(payload["lo"]), _parse_bound(payload["hi"]),
                   bool(payload["lo_closed"]), bool(payload["hi_closed"]))

    def __str__(self) -> str:
        left = '[' if self.lo_closed else '('
        right = ']' if self.hi_closed else ')'
        return f"{left}{_fmt(self.lo)}, {_fmt(self.hi)}{right}"


def _parse_bound(value: Any) -> float:
    if isinstance(value, str):
        return float(value.strip().replace('+', ''))
    return float(value)


def _fmt(x: float) -> str:
    if x == -INF:
        return "-inf"
    if x == INF:
        return "+inf"
    return f"{x:.6g}"


def _touch(left: Interval, right: Interval) -> bool:
    """True when two sorted intervals overlap or share a covered endpoint."""
    if left.hi > right.lo:
        return True
    return left.hi == right.lo and (left.hi_closed or right.lo_closed)


class IntervalUnion:
    """Sorted, disjoint, non-overlapping intervals."""

    def __init__(self, intervals: Iterable[Interval] = ()):
        self.intervals: Tuple[Interval, ...] = self._normalize(intervals)

    @staticmethod
    def _normalize(intervals: Iterable[Interval]) -> Tuple[Interval, ...]:
        pieces = sorted((i for i in intervals if not i.is_empty),
                        key=lambda i: (i.lo, not i.lo_closed))
        merged: List[Interval] = []
        for piece in pieces:
            if merged and _touch(merged[-1], piece):
                last = merged[-1]
                if piece.hi > last.hi:
                    hi, hi_closed = piece.hi, piece.hi_closed
                elif piece.hi < last.hi:
                    hi, hi_closed = last.hi, last.hi_closed
                else:
                    hi, hi_closed = last.hi, last.hi_closed or piece.hi_closed
                lo_closed = last.lo_closed or (piece.lo == last.lo and piece.lo_closed)
                merged[-1] = Interval(last.lo, hi, lo_closed, hi_closed)
            else:
                merged.append(piece)
        return tuple(merged)

    @classmethod
    def point(cls, x: float) -> 'IntervalUnion':
        return cls([Interval.point(x)])

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def __contains__(self, x: float) -> bool:
        return any(x in i for i in self.intervals)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IntervalUnion) and self.intervals == other.intervals

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def union(self, other: 'IntervalUnion') -> 'IntervalUnion':
        return IntervalUnion(self.intervals + other.intervals)

    def intersect(self, window: Interval) -> 'IntervalUnion':
        return IntervalUnion(i.intersect(window) for i in self.intervals)

    def issubset(self, other: 'IntervalUnion') -> bool:
        """Every interval of self lies within a single interval of other."""
        return all(any(i.intersect(j) == i for j in other.intervals) for i in self.intervals)

    def hull(self) -> Optional[Interval]:
        """Convex hull, or None for the empty set."""
        if self.is_empty:
            return None
        first, last = self.intervals[0], self.intervals[-1]
        return Interval(first.lo, last.hi, first.lo_closed, last.hi_closed)

    def sup_at_or_below(self, threshold: float) -> Optional[float]:
        """Largest element <= threshold (closure sup), or None if none exists."""
        best = None
        for i in self.intervals:
            clipped = i.intersect(Interval(-INF, threshold, False, True))
            if not clipped.is_empty:
                best = clipped.hi
        return best

    def inf_at_or_above(self, threshold: float) -> Optional[float]:
        """Smallest element >= threshold (closure inf), or None if none exists."""
        for i in self.intervals:
            clipped = i.intersect(Interval(threshold, INF, True, False))
            if not clipped.is_empty:
                return clipped.lo
        return None

    def to_json(self) -> List[Dict[str, Any]]:
        return [i.to_dict() for i in self.intervals]

    @classmethod
    def from_json(cls, payload: List[Dict[str, Any]]) -> 'IntervalUnion':
        return cls(Interval.from_dict(p) for p in payload)

    def __str__(self) -> str:
        if self.is_empty:
            return "{}"
        return " U ".join(str(i) for i in self.intervals)

    def __repr__(self) -> str:
        return f"IntervalUnion({self})"
