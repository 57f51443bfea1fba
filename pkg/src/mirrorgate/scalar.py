"""Convex scalar functions used as objective outer functions and constraint sigmas.

Every function exposes a value, one fixed subgradient selection and a Lipschitz
constant (``None`` when no global constant exists). Classes are module level so
problems stay picklable for multi-process Monte Carlo runs.
"""
from __future__ import annotations

import math


class ScalarFunction:
    name = "custom"
    lipschitz: float | None = None
    is_linear = False

    def value(self, t: float) -> float:
        raise NotImplementedError

    def derivative(self, t: float) -> float:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class Linear(ScalarFunction):
    """sigma(t) = t."""

    name = "linear"
    lipschitz = 1.0
    is_linear = True

    def value(self, t):
        return t

    def derivative(self, t):
        return 1.0


class Abs(ScalarFunction):
    """sigma(t) = |t|; the subgradient at 0 is taken to be 0."""

    name = "abs"
    lipschitz = 1.0

    def value(self, t):
        return abs(t)

    def derivative(self, t):
        if t > 0:
            return 1.0
        if t < 0:
            return -1.0
        return 0.0


class PositivePart(ScalarFunction):
    """sigma(t) = max(t, 0); the subgradient at 0 is taken to be 0."""

    name = "pos"
    lipschitz = 1.0

    def value(self, t):
        return t if t > 0 else 0.0

    def derivative(self, t):
        return 1.0 if t > 0 else 0.0


class Square(ScalarFunction):
    """sigma(t) = t**2. Not globally Lipschitz: callers must supply a bound."""

    name = "square"

    def value(self, t):
        return t * t

    def derivative(self, t):
        return 2.0 * t


class Callback(ScalarFunction):
    """Wrap a user supplied (value, derivative) pair."""

    def __init__(self, value, derivative, lipschitz=None, name="callback"):
        self._value = value
        self._derivative = derivative
        self.lipschitz = lipschitz
        self.name = name

    def value(self, t):
        return float(self._value(t))

    def derivative(self, t):
        return float(self._derivative(t))

    def __repr__(self):
        return f"Callback(name={self.name!r}, lipschitz={self.lipschitz})"


LINEAR = Linear()

_BY_TAG = {"linear": Linear, "abs": Abs, "pos": PositivePart}


def from_tag(tag: str) -> ScalarFunction:
    """Look up a Lipschitz scalar function by its problem-file tag."""
    try:
        return _BY_TAG[tag]()
    except KeyError:
        raise ValueError(f"unknown scalar function tag {tag!r}; "
                         f"expected one of {sorted(_BY_TAG)}") from None


def lipschitz_bound(functions) -> float:
    """Uniform Lipschitz bound over a collection of scalar functions."""
    best = 0.0
    for fn in functions:
        if fn.lipschitz is None or not math.isfinite(fn.lipschitz):
            raise ValueError(f"{fn!r} has no global Lipschitz constant; "
                             "supply M_f/M_g explicitly")
        best = max(best, fn.lipschitz)
    return best
