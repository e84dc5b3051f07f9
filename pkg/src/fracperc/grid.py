"""Nested N_n-adic cubes in [0,1]^d: sequences, addresses, boxes and survival trees.

A level-k cube is stored by its integer corner coordinates in units of the
level-k side length ``1 / prod(N_1..N_k)``.  A :data:`CubeAddress` is the
equivalent path of per-level digit tuples; the two are converted exactly.

Within a level, cubes are always ordered lexicographically by address, i.e.
by parent first and then by the child digit tuple (first axis most
significant).  Descendants of a cube at any deeper level therefore form a
contiguous index range.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientSequence, InvalidAddress

CubeAddress = tuple  # tuple[tuple[int, ...], ...], one digit tuple per level

_FORMS = ("constant", "explicit", "one_minus_geometric", "ceil_geometric")


@dataclass(frozen=True)
class ParamSequence:
    """A 1-indexed parameter sequence, explicit or given in closed form.

    Closed forms are evaluated lazily, so they are not bounded by any config
    length:

    * ``constant``: ``value``
    * ``explicit``: ``values[n-1]``; raises past the end
    * ``one_minus_geometric``: ``1 - c * a**n``
    * ``ceil_geometric``: ``ceil(b * r**n)`` (exact rational evaluation)
    """

    form: str
    values: tuple = ()
    value: float = 0.0
    c: float = 0.0
    a: float = 0.0
    b: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if self.form not in _FORMS:
            raise ValueError(f"unknown sequence form {self.form!r}")

    @classmethod
    def constant(cls, value) -> "ParamSequence":
        return cls("constant", value=value)

    @classmethod
    def explicit(cls, values: Iterable) -> "ParamSequence":
        return cls("explicit", values=tuple(values))

    @classmethod
    def one_minus_geometric(cls, c: float, a: float) -> "ParamSequence":
        return cls("one_minus_geometric", c=c, a=a)

    @classmethod
    def ceil_geometric(cls, b: float, r: float) -> "ParamSequence":
        return cls("ceil_geometric", b=b, r=r)

    def __call__(self, n: int):
        if n < 1:
            raise IndexError("sequences are indexed from 1")
        if self.form == "constant":
            return self.value
        if self.form == "explicit":
            if n > len(self.values):
                raise InsufficientSequence(
                    f"explicit sequence has {len(self.values)} terms, term {n} requested")
            return self.values[n - 1]
        if self.form == "one_minus_geometric":
            return 1.0 - self.c * self.a ** n
        return math.ceil(Fraction(self.b) * Fraction(self.r) ** n)

    def take(self, n: int) -> tuple:
        return tuple(self(k) for k in range(1, n + 1))

    @property
    def finite_length(self) -> int | None:
        return len(self.values) if self.form == "explicit" else None

    def to_config(self):
        if self.form == "constant":
            return self.value
        if self.form == "explicit":
            return list(self.values)
        if self.form == "one_minus_geometric":
            return {"form": self.form, "c": self.c, "a": self.a}
        return {"form": self.form, "b": self.b, "r": self.r}

    @classmethod
    def from_config(cls, obj) -> "ParamSequence":
        """Parse a number (constant), a list (explicit) or a ``{"form": ...}`` table."""
        if isinstance(obj, ParamSequence):
            return obj
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return cls.constant(obj)
        if isinstance(obj, (list, tuple)):
            return cls.explicit(obj)
        if isinstance(obj, dict):
            form = obj.get("form")
            if form == "one_minus_geometric":
                return cls.one_minus_geometric(float(obj["c"]), float(obj["a"]))
            if form == "ceil_geometric":
                return cls.ceil_geometric(obj["b"], obj["r"])
            if form == "constant":
                return cls.constant(obj["value"])
            if form == "explicit":
                return cls.explicit(obj["values"])
        raise ValueError(f"cannot parse sequence spec {obj!r}")


@dataclass(frozen=True)
class ScaleSequence:
    """Spatial dimension plus the branching factors N_1, N_2, ... per axis."""

    d: int
    branching: ParamSequence
    dense: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        n = self.branching.finite_length
        if n is not None:
            self.prefix(n)  # eager validation of explicit sequences

    @classmethod
    def constant(cls, d: int, N: int) -> "ScaleSequence":
        return cls(d, ParamSequence.constant(int(N)))

    @classmethod
    def explicit(cls, d: int, levels: Sequence[int], dense: bool = False) -> "ScaleSequence":
        return cls(d, ParamSequence.explicit(int(x) for x in levels), dense)

    def N(self, k: int) -> int:
        """Branching factor per axis used to subdivide level k-1 into level k."""
        val = self.branching(k)
        if int(val) != val or val < 2:
            raise ValueError(f"branching factor N_{k}={val} must be an integer >= 2")
        val = int(val)
        if self.dense and k > 1 and val < self.N(k - 1):
            raise ValueError("dense scale sequences must be non-decreasing")
        return val

    def prefix(self, depth: int) -> tuple[int, ...]:
        return tuple(self.N(k) for k in range(1, depth + 1))

    def cells(self, k: int) -> int:
        """Number of level-k cells per axis, prod_{j<=k} N_j."""
        return math.prod(self.prefix(k))

    def side(self, k: int) -> Fraction:
        return Fraction(1, self.cells(k))

    def children_per_cube(self, k: int) -> int:
        """Number of level-k children of a level-(k-1) cube."""
        return self.N(k) ** self.d

    def shifted(self, n: int, length: int) -> "ScaleSequence":
        """Explicit sequence N_{n+1}, ..., N_{n+length} (used for rescaled subtrees)."""
        return ScaleSequence.explicit(
            self.d, [self.N(n + k) for k in range(1, length + 1)], self.dense)

    def to_config(self) -> dict:
        return {"d": self.d, "N": self.branching.to_config(), "dense": self.dense}


# -- addresses and boxes ---------------------------------------------------------

@dataclass(frozen=True)
class Box:
    corner: tuple[Fraction, ...]
    side: Fraction

    def contains(self, other: "Box") -> bool:
        return all(c <= o and o + other.side <= c + self.side
                   for c, o in zip(self.corner, other.corner))


def validate_address(addr: CubeAddress, scales: ScaleSequence) -> None:
    for k, digits in enumerate(addr, start=1):
        if len(digits) != scales.d:
            raise InvalidAddress(f"level {k} tuple {digits} has wrong length for d={scales.d}")
        N = scales.N(k)
        for x in digits:
            if not 0 <= x < N:
                raise InvalidAddress(f"digit {x} out of range 0..{N - 1} at level {k}")


def address_to_coords(addr: CubeAddress, scales: ScaleSequence) -> tuple[int, ...]:
    validate_address(addr, scales)
    coords = [0] * scales.d
    for k, digits in enumerate(addr, start=1):
        N = scales.N(k)
        coords = [c * N + x for c, x in zip(coords, digits)]
    return tuple(coords)


def coords_to_address(level: int, coords: Sequence[int], scales: ScaleSequence) -> CubeAddress:
    coords = [int(c) for c in coords]
    digits = []
    for k in range(level, 0, -1):
        N = scales.N(k)
        digits.append(tuple(c % N for c in coords))
        coords = [c // N for c in coords]
    if any(coords):
        raise InvalidAddress("coordinates out of range for level")
    return tuple(reversed(digits))


def cube_box(addr: CubeAddress, scales: ScaleSequence) -> Box:
    coords = address_to_coords(addr, scales)
    side = scales.side(len(addr))
    return Box(tuple(c * side for c in coords), side)


def children_addresses(addr: CubeAddress, scales: ScaleSequence) -> list[CubeAddress]:
    validate_address(addr, scales)
    N = scales.N(len(addr) + 1)
    return [tuple(addr) + (digits,)
            for digits in itertools.product(range(N), repeat=scales.d)]


def digit_offsets(N: int, d: int) -> np.ndarray:
    """All child digit tuples of one cube, in lexicographic order, shape (N^d, d)."""
    grids = np.meshgrid(*([np.arange(N)] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)


def expand_children(coords: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray]:
    """All children of the given cubes: (child coords, parent index), address-sorted."""
    n, d = coords.shape
    offs = digit_offsets(N, d)
    child = (coords[:, None, :] * N + offs[None, :, :]).reshape(-1, d)
    parent = np.repeat(np.arange(n, dtype=np.int64), len(offs))
    return child, parent


# -- survival trees --------------------------------------------------------------

def _frozen(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurvivalTree:
    """Finite-depth record of the retained cubes of a construction.

    ``coords[k]`` has shape ``(n_k, d)`` and ``parents[k][i]`` is the index of
    the level-(k-1) parent of cube ``i`` at level k (``parents[0] == [-1]``).
    The root is always retained; deeper levels may be empty.
    """

    scales: ScaleSequence
    depth: int
    coords: tuple = field(repr=False)
    parents: tuple = field(repr=False)

    def __post_init__(self):
        if len(self.coords) != self.depth + 1 or len(self.parents) != self.depth + 1:
            raise ValueError("need one coordinate/parent array per level 0..depth")
        object.__setattr__(self, "coords", tuple(_frozen(c).reshape(-1, self.scales.d)
                                                 for c in self.coords))
        object.__setattr__(self, "parents", tuple(_frozen(p).ravel() for p in self.parents))
        if self.coords[0].shape[0] != 1 or self.coords[0].any():
            raise ValueError("level 0 must hold exactly the root cube")
        for k in range(1, self.depth + 1):
            c, p = self.coords[k], self.parents[k]
            if len(c) != len(p):
                raise ValueError(f"level {k}: coords/parents length mismatch")
            if len(p) == 0:
                continue
            if p.min() < 0 or p.max() >= len(self.coords[k - 1]):
                raise ValueError(f"level {k}: parent index out of range")
            N = self.scales.N(k)
            if not np.array_equal(c // N, self.coords[k - 1][p]):
                raise ValueError(f"level {k}: child outside its parent cube")
            key = p * N ** self.scales.d + _digit_rank(c % N, N)
            if np.any(np.diff(key) <= 0):
                raise ValueError(f"level {k}: cubes not in strict address order")

    # -- constructors

    @classmethod
    def full(cls, scales: ScaleSequence, depth: int) -> "SurvivalTree":
        coords = [np.zeros((1, scales.d), np.int64)]
        parents = [np.array([-1])]
        for k in range(1, depth + 1):
            c, p = expand_children(coords[-1], scales.N(k))
            coords.append(c)
            parents.append(p)
        return cls(scales, depth, tuple(coords), tuple(parents))

    @classmethod
    def from_addresses(cls, scales: ScaleSequence, levels: Sequence[Iterable[CubeAddress]]) -> "SurvivalTree":
        """Build from per-level address collections (level 0 must be ``[()]``)."""
        depth = len(levels) - 1
        coords = [np.zeros((1, scales.d), np.int64)]
        parents = [np.array([-1])]
        for k in range(1, depth + 1):
            addrs = sorted(set(tuple(tuple(t) for t in a) for a in levels[k]))
            index = {tuple(row): i for i, row in enumerate(coords[-1].tolist())}
            cs, ps = [], []
            for a in addrs:
                if len(a) != k:
                    raise InvalidAddress(f"address {a} listed at level {k}")
                pc = address_to_coords(a[:-1], scales)
                if pc not in index:
                    raise InvalidAddress(f"address {a} has no retained parent")
                cs.append(address_to_coords(a, scales))
                ps.append(index[pc])
            coords.append(np.array(cs, np.int64).reshape(-1, scales.d))
            parents.append(np.array(ps, np.int64))
        return cls(scales, depth, tuple(coords), tuple(parents))

    @classmethod
    def from_coords(cls, scales: ScaleSequence, levels: Sequence[np.ndarray]) -> "SurvivalTree":
        """Build from unordered per-level coordinate arrays (level 0 is the root).

        Every cube must lie inside a listed cube of the previous level.
        """
        d = scales.d
        coords = [np.zeros((1, d), np.int64)]
        parents = [np.array([-1])]
        for k in range(1, len(levels)):
            c = np.unique(np.asarray(levels[k], np.int64).reshape(-1, d), axis=0)
            N = scales.N(k)
            index = {tuple(row): i for i, row in enumerate(coords[-1].tolist())}
            try:
                par = np.array([index[tuple(row)] for row in (c // N).tolist()], np.int64)
            except KeyError as exc:
                raise InvalidAddress(f"level {k} cube has no parent at level {k - 1}") from exc
            order = np.lexsort((_digit_rank(c % N, N), par))
            coords.append(c[order])
            parents.append(par[order])
        return cls(scales, len(levels) - 1, tuple(coords), tuple(parents))

    # -- queries

    @property
    def d(self) -> int:
        return self.scales.d

    def count(self, k: int) -> int:
        return len(self.coords[k])

    def counts(self) -> list[int]:
        return [self.count(k) for k in range(self.depth + 1)]

    @property
    def extinct(self) -> bool:
        return self.count(self.depth) == 0

    def side(self, k: int) -> Fraction:
        return self.scales.side(k)

    def address(self, k: int, i: int) -> CubeAddress:
        return coords_to_address(k, self.coords[k][i], self.scales)

    def addresses(self, k: int) -> list[CubeAddress]:
        return [self.address(k, i) for i in range(self.count(k))]

    def index_of(self, addr: CubeAddress) -> int:
        k = len(addr)
        key = address_to_coords(addr, self.scales)
        try:
            return self._index[k][key]
        except (KeyError, IndexError):
            raise InvalidAddress(f"{addr} is not retained") from None

    @cached_property
    def _index(self) -> list[dict]:
        return [{tuple(row): i for i, row in enumerate(c.tolist())} for c in self.coords]

    def child_counts(self, k: int) -> np.ndarray:
        """Number of retained children of every level-k cube."""
        return np.bincount(self.parents[k + 1], minlength=self.count(k))

    def children_range(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Start/stop indices at level k+1 of the children of every level-k cube."""
        p = self.parents[k + 1]
        idx = np.arange(self.count(k))
        return np.searchsorted(p, idx, "left"), np.searchsorted(p, idx, "right")

    def descendant_range(self, k: int, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Start/stop indices at ``level`` of the descendants of every level-k cube."""
        lo = np.arange(self.count(k))
        hi = lo + 1
        for j in range(k + 1, level + 1):
            p = self.parents[j]
            lo = np.searchsorted(p, lo, "left")
            hi = np.searchsorted(p, hi, "left")
        return lo, hi

    def child_digits(self, k: int) -> np.ndarray:
        """Digit tuple of every level-k cube relative to its parent."""
        return self.coords[k] % self.scales.N(k)

    def box(self, k: int, i: int) -> Box:
        side = self.side(k)
        return Box(tuple(int(c) * side for c in self.coords[k][i]), side)

    def restrict(self, keep: Sequence[np.ndarray]) -> "SurvivalTree":
        """Subtree keeping the cubes flagged in ``keep[k]`` (boolean per level).

        Cubes whose parent is dropped are dropped too.
        """
        coords = [self.coords[0]]
        parents = [self.parents[0]]
        alive = np.ones(1, bool)
        new_index = np.zeros(1, np.int64)
        for k in range(1, self.depth + 1):
            m = np.asarray(keep[k], bool) & alive[self.parents[k]]
            coords.append(self.coords[k][m])
            parents.append(new_index[self.parents[k][m]])
            alive = m
            new_index = np.cumsum(m) - 1
        return SurvivalTree(self.scales, self.depth, tuple(coords), tuple(parents))

    def truncate(self, depth: int) -> "SurvivalTree":
        return SurvivalTree(self.scales, depth, self.coords[:depth + 1], self.parents[:depth + 1])

    def same_as(self, other: "SurvivalTree") -> bool:
        return (self.d == other.d and self.depth == other.depth
                and self.scales.prefix(self.depth) == other.scales.prefix(other.depth)
                and all(np.array_equal(a, b) for a, b in zip(self.coords, other.coords)))

    # -- point samples

    def points(self, level: int | None = None, corners: bool = True,
               centers: bool = True) -> np.ndarray:
        """Float sample points of the retained cubes at ``level`` (default: deepest).

        Corners shared by neighbouring cubes are reported once.
        """
        level = self.depth if level is None else level
        c = self.coords[level].astype(float)
        side = float(self.side(level))
        pts = []
        if centers:
            pts.append((c + 0.5) * side)
        if corners:
            offs = digit_offsets(2, self.d).astype(float)
            pts.append(((c[:, None, :] + offs[None]) * side).reshape(-1, self.d))
        out = np.concatenate(pts) if pts else np.zeros((0, self.d))
        return np.unique(out, axis=0)

    # -- text serialization

    def dumps(self) -> str:
        """Stable text format: header lines, then one ``level k:`` line per level.

        Example::

            survival-tree 1
            d 2
            scales 3 6
            depth 2
            level 0: ()
            level 1: (0,1) (1,1)
            level 2: (0,1)(2,3) (1,1)(0,0)
        """
        lines = ["survival-tree 1", f"d {self.d}",
                 "scales " + " ".join(map(str, self.scales.prefix(self.depth))),
                 f"depth {self.depth}", "level 0: ()"]
        for k in range(1, self.depth + 1):
            addrs = ["".join("(" + ",".join(map(str, t)) + ")" for t in a)
                     for a in self.addresses(k)]
            lines.append(f"level {k}: " + " ".join(addrs) if addrs else f"level {k}:")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "SurvivalTree":
        lines = [ln.strip() for ln in text.strip().splitlines()]
        if lines[0] != "survival-tree 1":
            raise ValueError("not a survival-tree v1 document")
        header = dict(ln.split(" ", 1) if " " in ln else (ln, "") for ln in lines[1:4])
        d = int(header["d"])
        levels = [int(x) for x in header["scales"].split()]
        depth = int(header["depth"])
        scales = ScaleSequence.explicit(d, levels) if levels else ScaleSequence.constant(d, 2)
        per_level = [[()]]
        for k, ln in enumerate(lines[5:5 + depth], start=1):
            tag, _, body = ln.partition(":")
            if tag != f"level {k}":
                raise ValueError(f"expected level {k}, got {tag!r}")
            addrs = []
            for tok in body.split():
                tuples = re.findall(r"\(([^)]*)\)", tok)
                addrs.append(tuple(tuple(int(x) for x in t.split(",")) for t in tuples))
            per_level.append(addrs)
        return cls.from_addresses(scales, per_level)


def _digit_rank(digits: np.ndarray, N: int) -> np.ndarray:
    """Lexicographic rank of digit tuples among all N^d tuples."""
    rank = np.zeros(len(digits), np.int64)
    for axis in range(digits.shape[1]):
        rank = rank * N + digits[:, axis]
    return rank
