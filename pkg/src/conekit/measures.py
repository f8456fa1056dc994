"""Finite discrete weighted-atom measures and marked configurations.

A measure is a finite sum of weighted point masses ``sum_i s_i * delta_{x_i}``
with strictly positive weights ("marks") and pairwise distinct positions
("pinpointing").  Atom order is canonical (sorted by position), so equality
and hashing are structural.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Iterator, NamedTuple

MAX_ENUM_ATOMS = 30  # 2^n sub-measure enumeration guard


class Atom(NamedTuple):
    mark: float
    position: tuple[float, ...]


def _as_position(pos) -> tuple[float, ...]:
    if isinstance(pos, (int, float)):
        return (float(pos),)
    return tuple(float(c) for c in pos)


class FiniteMeasure:
    """A finite weighted atom set; the empty atom set is the zero measure."""

    __slots__ = ("atoms",)

    def __init__(self, atoms: Iterable = ()):
        canon = []
        for a in atoms:
            mark, pos = a
            mark = float(mark)
            if not mark > 0.0:
                raise ValueError(f"atom mark must be positive, got {mark}")
            pos = _as_position(pos)
            if not all(math.isfinite(c) for c in pos):
                raise ValueError(f"atom position must be finite, got {pos}")
            canon.append(Atom(mark, pos))
        canon.sort(key=lambda a: a.position)
        for a, b in zip(canon, canon[1:]):
            if a.position == b.position:
                raise ValueError(f"coincident atom positions: {a.position}")
        self.atoms = tuple(canon)

    @classmethod
    def unchecked(cls, atoms: tuple[Atom, ...]) -> "FiniteMeasure":
        """Bypass validation; atoms must already be canonical Atom tuples.

        Internal fast path.  Quadrature in "separate" node policy also uses
        it to carry formally coincident evaluation slots.
        """
        obj = cls.__new__(cls)
        obj.atoms = atoms
        return obj

    # -- basic queries ----------------------------------------------------

    def __len__(self) -> int:
        return len(self.atoms)

    def __bool__(self) -> bool:
        return bool(self.atoms)

    def __eq__(self, other) -> bool:
        return isinstance(other, FiniteMeasure) and self.atoms == other.atoms

    def __hash__(self) -> int:
        return hash(self.atoms)

    def __repr__(self) -> str:
        body = " + ".join(f"{a.mark:g}*d{a.position}" for a in self.atoms)
        return f"FiniteMeasure({body or '0'})"

    @property
    def positions(self) -> tuple[tuple[float, ...], ...]:
        return tuple(a.position for a in self.atoms)

    @property
    def marks(self) -> tuple[float, ...]:
        return tuple(a.mark for a in self.atoms)

    def total_mass(self) -> float:
        return sum(a.mark for a in self.atoms)

    def mark_at(self, position) -> float:
        pos = _as_position(position)
        for a in self.atoms:
            if a.position == pos:
                return a.mark
        raise KeyError(f"no atom at {pos}")

    # -- measure arithmetic ------------------------------------------------

    def plus_atom(self, mark: float, position) -> "FiniteMeasure":
        """Insert an atom at a fresh position (raises on occupied site)."""
        return FiniteMeasure(self.atoms + ((mark, position),))

    def drop(self, position) -> "FiniteMeasure":
        pos = _as_position(position)
        kept = tuple(a for a in self.atoms if a.position != pos)
        if len(kept) == len(self.atoms):
            raise KeyError(f"no atom at {pos}")
        return FiniteMeasure.unchecked(kept)

    def add(self, other: "FiniteMeasure") -> "FiniteMeasure":
        """Measure addition: marks at coincident positions are summed."""
        acc: dict[tuple[float, ...], float] = {}
        for a in self.atoms + other.atoms:
            acc[a.position] = acc.get(a.position, 0.0) + a.mark
        return FiniteMeasure.unchecked(
            tuple(Atom(m, p) for p, m in sorted(acc.items()))
        )

    def __add__(self, other: "FiniteMeasure") -> "FiniteMeasure":
        return self.add(other)

    # -- spec operations ---------------------------------------------------

    def local_mass(self, box) -> float:
        """Sum of marks of atoms whose position lies in the box.

        ``box`` is a sequence of (lo, hi) pairs, one per coordinate;
        intervals are closed.
        """
        bounds = [(float(lo), float(hi)) for lo, hi in box]
        total = 0.0
        for a in self.atoms:
            if len(a.position) != len(bounds):
                raise ValueError("box dimension mismatch")
            if all(lo <= c <= hi for c, (lo, hi) in zip(a.position, bounds)):
                total += a.mark
        return total

    def restrict(self, box, mark_interval=None) -> "FiniteMeasure":
        """Atoms inside the box (and mark window, if given)."""
        bounds = [(float(lo), float(hi)) for lo, hi in box]
        kept = []
        for a in self.atoms:
            if not all(lo <= c <= hi for c, (lo, hi) in zip(a.position, bounds)):
                continue
            if mark_interval is not None:
                lo, hi = mark_interval
                if not lo <= a.mark <= hi:
                    continue
            kept.append(a)
        return FiniteMeasure.unchecked(tuple(kept))

    def sub_measures(self, max_atoms: int | None = None) -> Iterator["FiniteMeasure"]:
        """All 2^n sub-measures, marks inherited from the parent.

        ``max_atoms`` caps the sub-measure size (useful when the integrand
        vanishes on larger configurations).
        """
        n = len(self.atoms)
        if n > MAX_ENUM_ATOMS:
            raise ValueError(f"refusing to enumerate 2^{n} sub-measures")
        top = n if max_atoms is None else min(n, max_atoms)
        for r in range(top + 1):
            for combo in itertools.combinations(self.atoms, r):
                yield FiniteMeasure.unchecked(combo)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> list[dict]:
        return [{"mark": a.mark, "position": list(a.position)} for a in self.atoms]

    @classmethod
    def from_json(cls, records: list[dict]) -> "FiniteMeasure":
        return cls((r["mark"], r["position"]) for r in records)


ZERO = FiniteMeasure()


class MarkedConfiguration:
    """A finite pinpointing set of (mark, position) pairs."""

    __slots__ = ("points",)

    def __init__(self, points: Iterable = ()):
        pts = sorted(
            (Atom(float(m), _as_position(p)) for m, p in points),
            key=lambda a: a.position,
        )
        for a, b in zip(pts, pts[1:]):
            if a.position == b.position:
                raise ValueError(f"non-pinpointing configuration at {a.position}")
        self.points = tuple(pts)

    def __eq__(self, other) -> bool:
        return isinstance(other, MarkedConfiguration) and self.points == other.points

    def __hash__(self) -> int:
        return hash(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"MarkedConfiguration({list(self.points)!r})"


def r_map(gamma: MarkedConfiguration) -> FiniteMeasure:
    """Marked configuration {(s, x)} -> measure sum of s*delta_x."""
    return FiniteMeasure((a.mark, a.position) for a in gamma.points)


def r_inverse(eta: FiniteMeasure) -> MarkedConfiguration:
    """Measure sum of s*delta_x -> marked configuration {(s, x)}."""
    return MarkedConfiguration((a.mark, a.position) for a in eta.atoms)
