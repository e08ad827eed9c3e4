"""Conjunctive multiaxial descriptors over independently indexed axes.

One descriptor binds keys from several axes to express one complex
concept; an expression is an ordered list of descriptors. The text form
is frozen as the wire format everywhere (files, CLI, HTTP bodies):

    [(Q[0,0]),(L[0,1])],[(Q[0,1]),(L[0,2])]

A situation is the factual counterpart: the node keys observed on each
axis at one moment. Unlike a descriptor it may carry several bindings on
the same axis (a patient can report two localizations at once).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from .errors import MultiaxialSyntaxError, UnknownAxisError
from .keys import Key, partially_unifiable

_AXIS_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


@dataclass(frozen=True)
class AxisBinding:
    axis: str
    key: Key

    def __str__(self) -> str:
        return f"({self.axis}{self.key})"


@dataclass(frozen=True)
class MultiaxialDescriptor:
    bindings: tuple[AxisBinding, ...]

    def __post_init__(self):
        if not self.bindings:
            raise ValueError("a descriptor needs at least one axis binding")
        axes = [b.axis for b in self.bindings]
        if len(axes) != len(set(axes)):
            raise ValueError(f"descriptor binds an axis twice: {axes}")

    def axes(self) -> tuple[str, ...]:
        return tuple(b.axis for b in self.bindings)

    def key_for(self, axis: str) -> Key | None:
        for b in self.bindings:
            if b.axis == axis:
                return b.key
        return None

    def __str__(self) -> str:
        return "[" + ",".join(str(b) for b in self.bindings) + "]"


@dataclass(frozen=True)
class MultiaxialExpression:
    descriptors: tuple[MultiaxialDescriptor, ...]

    def __post_init__(self):
        if not self.descriptors:
            raise ValueError("an expression needs at least one descriptor")

    def __str__(self) -> str:
        return ",".join(str(d) for d in self.descriptors)


@dataclass(frozen=True)
class Situation:
    """Observed axis bindings; repeats per axis are allowed."""

    bindings: tuple[AxisBinding, ...]

    def axes(self) -> set[str]:
        return {b.axis for b in self.bindings}

    def keys_for(self, axis: str) -> list[Key]:
        return [b.key for b in self.bindings if b.axis == axis]

    def __str__(self) -> str:
        return ",".join(f"[{b}]" for b in self.bindings)

    @classmethod
    def from_text(cls, text: str, axes: Mapping[str, object] | None = None) -> "Situation":
        expr = parse_multiaxial(text, axes=axes)
        return cls(tuple(b for d in expr.descriptors for b in d.bindings))


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, char: str):
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != char:
            raise MultiaxialSyntaxError(f"expected {char!r}", self.pos)
        self.pos += 1

    def peek(self) -> str | None:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else None

    def axis_name(self) -> str:
        self.skip_ws()
        match = _AXIS_NAME.match(self.text, self.pos)
        if match is None:
            raise MultiaxialSyntaxError("expected an axis name", self.pos)
        self.pos = match.end()
        return match.group(0)

    def key(self) -> Key:
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != "[":
            raise MultiaxialSyntaxError("expected a key", self.pos)
        depth_end = self.text.find("]", self.pos)
        if depth_end == -1:
            raise MultiaxialSyntaxError("unterminated key", self.pos)
        from .keys import parse_key

        key = parse_key(self.text[self.pos : depth_end + 1])
        self.pos = depth_end + 1
        return key


def parse_multiaxial(
    text: str, axes: Mapping[str, object] | None = None
) -> MultiaxialExpression:
    """Parse the bracketed notation. When an axis registry is supplied,
    unknown axes are rejected and keys must sit under the axis root."""
    scanner = _Scanner(text)
    descriptors: list[MultiaxialDescriptor] = []
    while True:
        scanner.expect("[")
        bindings: list[AxisBinding] = []
        while True:
            scanner.expect("(")
            axis = scanner.axis_name()
            key = scanner.key()
            scanner.expect(")")
            bindings.append(AxisBinding(axis, key))
            if scanner.peek() == ",":
                scanner.expect(",")
                continue
            break
        scanner.expect("]")
        try:
            descriptors.append(MultiaxialDescriptor(tuple(bindings)))
        except ValueError as exc:
            raise MultiaxialSyntaxError(str(exc), scanner.pos) from None
        if scanner.peek() == ",":
            scanner.expect(",")
            continue
        break
    scanner.skip_ws()
    if scanner.pos != len(text):
        raise MultiaxialSyntaxError("trailing input after expression", scanner.pos)
    expr = MultiaxialExpression(tuple(descriptors))
    if axes is not None:
        _check_against_registry(expr, axes)
    return expr


def _check_against_registry(expr: MultiaxialExpression, axes: Mapping[str, object]):
    root = Key.of(0)
    for descriptor in expr.descriptors:
        for binding in descriptor.bindings:
            if binding.axis not in axes:
                raise UnknownAxisError(f"unknown axis: {binding.axis!r}")
            if not partially_unifiable(root, binding.key):
                raise UnknownAxisError(
                    f"key {binding.key} cannot sit under the root of axis {binding.axis!r}"
                )


MissingAxisHook = Callable[[AxisBinding], bool]


def descriptor_matches(
    descriptor: MultiaxialDescriptor,
    situation: Situation | Iterable[AxisBinding],
    on_missing: MissingAxisHook | None = None,
    situation_as_query: bool = False,
) -> bool:
    """Conjunctive match: every binding of the descriptor must unify into
    some situation binding on its axis. An axis absent from the situation
    fails the match unless the on_missing hook decides otherwise.

    situation_as_query flips the unification direction (the situation key
    unifies into the descriptor key); off by default everywhere.
    """
    if not isinstance(situation, Situation):
        situation = Situation(tuple(situation))
    for binding in descriptor.bindings:
        candidates = situation.keys_for(binding.axis)
        if not candidates:
            if on_missing is not None and on_missing(binding):
                continue
            return False
        if situation_as_query:
            if not any(partially_unifiable(key, binding.key) for key in candidates):
                return False
        elif not any(partially_unifiable(binding.key, key) for key in candidates):
            return False
    return True


def descriptor_subsumes(d1: MultiaxialDescriptor, d2: MultiaxialDescriptor) -> bool:
    """True iff d2 is at least as constrained: every axis of d1 appears in
    d2 with a key the d1 key unifies into."""
    for binding in d1.bindings:
        other = d2.key_for(binding.axis)
        if other is None or not partially_unifiable(binding.key, other):
            return False
    return True


def expression_matches(
    expr: MultiaxialExpression,
    situation: Situation | Iterable[AxisBinding],
    on_missing: MissingAxisHook | None = None,
) -> bool:
    """Descriptors of one expression are alternatives: any match counts."""
    return any(
        descriptor_matches(d, situation, on_missing) for d in expr.descriptors
    )
