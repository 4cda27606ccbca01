"""Named densities, test functions and bodies used by the CLI and tests."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .geometry import (
    Ball,
    Ellipsoid,
    Polygon,
    SphereField,
    StarBody,
    Superellipsoid,
    body_from_density,
)

_QUARTER = tuple(math.pi / 4 + j * math.pi / 2 for j in range(4))


def _superellipse_density(k: int, n: int) -> SphereField:
    def ev(u):
        s = np.zeros(u.shape[:-1])
        for j in range(u.shape[-1]):
            s = s + u[..., j] ** (2 * k)
        return s ** (-n / (2.0 * k))

    return SphereField(ev, name=f"superellipse-k{k}", positive=True)


def _square_density(u):
    return np.maximum(np.abs(u[..., 0]), np.abs(u[..., 1])) ** -2


DENSITIES: dict[str, Callable[[int], SphereField]] = {
    "one": lambda n: SphereField.constant(1.0, "one"),
    "four": lambda n: SphereField.constant(4.0, "four"),
    "cos-bump": lambda n: SphereField(lambda u: 1.0 + 0.5 * u[..., 0], name="cos-bump", positive=True),
    "ellipse": lambda n: SphereField(
        lambda u: (u[..., 0] ** 2 / 4.0 + u[..., 1] ** 2) ** -1.0, name="ellipse", positive=True
    ),
    "superellipse-k2": lambda n: _superellipse_density(2, n),
    "superellipse-k3": lambda n: _superellipse_density(3, n),
    "square": lambda n: SphereField(
        _square_density, name="square", smoothness="piecewise-smooth", positive=True, breakpoints=_QUARTER
    ),
}

TEST_FUNCTIONS: dict[str, Callable[[int], SphereField]] = {
    "one": lambda n: SphereField.constant(1.0, "one"),
    "zero": lambda n: SphereField.constant(0.0, "zero"),
    "cos": lambda n: SphereField(lambda u: u[..., 0], name="cos"),
    "cos2": lambda n: SphereField(lambda u: u[..., 0] ** 2, name="cos2"),
    "sincos": lambda n: SphereField(lambda u: u[..., 0] * u[..., 1], name="sincos"),
    "exp-cos": lambda n: SphereField(lambda u: np.exp(u[..., 0]), name="exp-cos"),
}


def density(name: str, n: int = 2) -> SphereField:
    try:
        return DENSITIES[name](n)
    except KeyError:
        raise KeyError(f"unknown density {name!r}; choose from {sorted(DENSITIES)}") from None


def test_function(name: str, n: int = 2) -> SphereField:
    try:
        return TEST_FUNCTIONS[name](n)
    except KeyError:
        raise KeyError(f"unknown test function {name!r}; choose from {sorted(TEST_FUNCTIONS)}") from None


def make_body(
    name: str,
    n: int = 2,
    k: int | None = None,
    axes=None,
    normals=None,
    offsets=None,
    expr: str | None = None,
) -> StarBody:
    """Build a body from a CLI-style family name and parameters."""
    if name == "ball":
        return Ball(n)
    if name == "ellipsoid":
        if axes is None:
            raise ValueError("ellipsoid needs axes")
        return Ellipsoid(axes)
    if name == "superellipsoid":
        if k is None:
            raise ValueError("superellipsoid needs k")
        return Superellipsoid(k, n)
    if name == "polygon":
        if normals is None:
            return Polygon.square()
        return Polygon(normals, offsets)
    if name == "square":
        return Polygon.square()
    if name == "density-body":
        if expr is None:
            raise ValueError("density-body needs expr=<density id>")
        return body_from_density(density(expr, n), n)
    raise ValueError(f"unknown body {name!r}")


# "test function" is the domain term; keep pytest from collecting it
test_function.__test__ = False
