"""Key algebra: keys over constants and the independent variable x.

A key is an ordered list of elements, each either a non-negative integer
constant or the variable ``x``. Every occurrence of ``x`` is independent
of every other. Keys are immutable and compare structurally, so they can
serve as dict keys and persisted identifiers.

Besides the closed-form decision procedures (instance, overlap, partial
unification) this module carries their brute-force counterparts based on
literal substitution enumeration. The closed forms are what the engine
runs; the enumerations are the independent route the test suite pits them
against.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Iterator, Sequence, Union

from .errors import KeySyntaxError

#: The variable element. A plain string keeps keys trivially hashable,
#: copyable and serializable.
X = "x"

Element = Union[int, str]


@dataclass(frozen=True)
class Key:
    """Immutable key; ``elements`` mixes int constants and the variable X."""

    elements: tuple[Element, ...]

    def __post_init__(self):
        if not self.elements:
            raise ValueError("a key has at least one element")
        for e in self.elements:
            if e is True or e is False:
                raise ValueError(f"invalid key element: {e!r}")
            if isinstance(e, int):
                if e < 0:
                    raise ValueError(f"key constants are non-negative, got {e}")
            elif e != X:
                raise ValueError(f"invalid key element: {e!r}")

    @classmethod
    def of(cls, *elements: Element) -> "Key":
        return cls(tuple(elements))

    @classmethod
    def parse(cls, text: str) -> "Key":
        return parse_key(text)

    def append(self, element: Element) -> "Key":
        return Key(self.elements + (element,))

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[Element]:
        return iter(self.elements)

    def __getitem__(self, index):
        return self.elements[index]

    def __str__(self) -> str:
        return "[" + ",".join(str(e) for e in self.elements) + "]"

    def __repr__(self) -> str:
        return f"Key({self})"


def parse_key(text: str) -> Key:
    """Parse the canonical text form ``[e1,...,en]``.

    Whitespace around elements is ignored; an element is a run of digits
    or the letter ``x``. The empty list is rejected.
    """
    i = 0
    n = len(text)

    def skip_ws(pos: int) -> int:
        while pos < n and text[pos].isspace():
            pos += 1
        return pos

    i = skip_ws(i)
    if i >= n or text[i] != "[":
        raise KeySyntaxError("expected '['", i)
    i += 1
    elements: list[Element] = []
    while True:
        i = skip_ws(i)
        start = i
        if i < n and text[i] == "x":
            elements.append(X)
            i += 1
        else:
            while i < n and text[i].isdigit():
                i += 1
            if i == start:
                raise KeySyntaxError("expected digits or 'x'", start)
            elements.append(int(text[start:i]))
        i = skip_ws(i)
        if i < n and text[i] == ",":
            i += 1
            continue
        if i < n and text[i] == "]":
            i += 1
            break
        raise KeySyntaxError("expected ',' or ']'", i)
    i = skip_ws(i)
    if i != n:
        raise KeySyntaxError("trailing input after key", i)
    return Key(tuple(elements))


def render_key(key: Key) -> str:
    return str(key)


def initial_key(key: Key, m: int) -> Key:
    """First ``m`` elements of ``key`` (1 <= m <= len(key))."""
    if not 1 <= m <= len(key):
        raise ValueError(f"initial key length {m} out of range 1..{len(key)}")
    return Key(key.elements[:m])


def is_instance(k1: Key, k2: Key) -> bool:
    """True iff k1 arises from k2 by substituting constants for some
    (possibly none) of k2's variables. Lengths must match; constants of
    k2 are fixed."""
    if len(k1) != len(k2):
        return False
    for a, b in zip(k1.elements, k2.elements):
        if b == X:
            continue
        if a != b:
            return False
    return True


def is_partial_instance(k1: Key, k2: Key) -> bool:
    """True iff, over the common prefix, at least one variable of k1 meets
    a constant of k2 and no two aligned constants disagree."""
    substituted = False
    for a, b in zip(k1.elements, k2.elements):
        if a == X:
            if b != X:
                substituted = True
        elif b != X and a != b:
            return False
    return substituted


def partially_unifiable(k1: Key, k2: Key) -> bool:
    """True iff some instance of k1 is an initial key of some instance of k2.

    Closed form: k1 is no longer than k2 and the two agree positionwise over
    k1's length (equal constants, or a variable on either side). Locked
    against partially_unifiable_by_enumeration by the test suite.
    """
    if len(k1) > len(k2):
        return False
    for a, b in zip(k1.elements, k2.elements):
        if a == X or b == X:
            continue
        if a != b:
            return False
    return True


def instances_overlap(k1: Key, k2: Key) -> bool:
    """True iff inst(k1) and inst(k2) share an element: equal lengths and
    positionwise compatible (equal constants, or a variable on either side)."""
    if len(k1) != len(k2):
        return False
    for a, b in zip(k1.elements, k2.elements):
        if a == X or b == X:
            continue
        if a != b:
            return False
    return True


def generalize(keys: Sequence[Key]) -> Key:
    """Positionwise merge of a non-empty key sequence.

    The result has the length of the longest input. A position keeps a
    constant n iff every input long enough to reach it holds n there;
    otherwise it becomes the variable.
    """
    if not keys:
        raise ValueError("generalize needs at least one key")
    length = max(len(k) for k in keys)
    merged: list[Element] = []
    for i in range(length):
        values = {k.elements[i] for k in keys if len(k) > i}
        if len(values) == 1 and (v := values.pop()) != X:
            merged.append(v)
        else:
            merged.append(X)
    return Key(tuple(merged))


def expand(k1: Key, k2: Key) -> Key:
    """Fill k1 up to k2's length with k2's tail; k1 must not be longer."""
    if len(k1) > len(k2):
        raise ValueError(f"cannot expand {k1} towards shorter {k2}")
    return Key(k1.elements + k2.elements[len(k1):])


# --- brute-force route: literal substitution enumeration -------------------


def oracle_alphabet(*keys: Key) -> tuple[int, ...]:
    """Constants occurring in the given keys plus one fresh constant.

    One fresh symbol is enough to witness variable independence at the
    bounded lengths the property suites run at.
    """
    constants = sorted({e for k in keys for e in k.elements if e != X})
    fresh = (max(constants) + 1) if constants else 0
    return tuple(constants) + (fresh,)


def enumerate_instances(key: Key, constants: Iterable[int]) -> set[tuple[Element, ...]]:
    """All instances of ``key`` over the given constants, as element tuples.

    Each variable position independently takes any of the constants or
    stays a variable (substituting every variable is not required).
    """
    constants = tuple(constants)
    options = [
        constants + (X,) if e == X else (e,)
        for e in key.elements
    ]
    return set(product(*options))


def is_instance_by_enumeration(k1: Key, k2: Key) -> bool:
    if len(k1) != len(k2):
        return False
    return k1.elements in enumerate_instances(k2, oracle_alphabet(k1, k2))


def instances_overlap_by_enumeration(k1: Key, k2: Key) -> bool:
    if len(k1) != len(k2):
        return False
    alphabet = oracle_alphabet(k1, k2)
    return not enumerate_instances(k1, alphabet).isdisjoint(
        enumerate_instances(k2, alphabet)
    )


def partially_unifiable_by_enumeration(k1: Key, k2: Key) -> bool:
    m = len(k1)
    if m > len(k2):
        return False
    alphabet = oracle_alphabet(k1, k2)
    prefixes = {inst[:m] for inst in enumerate_instances(k2, alphabet)}
    return not prefixes.isdisjoint(enumerate_instances(k1, alphabet))
