"""Named, serializable spatial fields for cross sections, sources and inflow.

A field spec is a colon-separated string, e.g. ``const:1``, ``gaussian:1:100``
or ``pin_cell:0.1:100:0.5``. :func:`make_field` turns it into a vectorized
callable ``f(x, y)``.
"""

from __future__ import annotations

import numpy as np

# Absorber unit cells of the lattice benchmark on [0, 5]^2, as (column, row)
# counted from the lower-left corner. This is the inner 5 x 5 block of the
# standard 7 x 7 lattice layout; the centre cell (2, 2) carries the source.
LATTICE_ABSORBERS = (
    (0, 0), (2, 0), (4, 0),
    (1, 1), (3, 1),
    (0, 2), (4, 2),
    (1, 3), (3, 3),
    (0, 4), (4, 4),
)
LATTICE_SOURCE = (2, 2)


class FieldSpecError(ValueError):
    pass


def _lattice_mask(x, y, cells) -> np.ndarray:
    a = np.floor(np.asarray(x, dtype=float))
    b = np.floor(np.asarray(y, dtype=float))
    mask = np.zeros(np.broadcast(a, b).shape, dtype=bool)
    for ca, cb in cells:
        mask |= (a == ca) & (b == cb)
    return mask


def variable_scattering(x, y):
    r2 = np.asarray(x) ** 2 + np.asarray(y) ** 2
    inner = 99.9 * r2**2 * (r2 - 2.0) ** 2 + 0.1
    return np.where(r2 <= 1.0, inner, 100.0)


def _const(value):
    v = float(value)
    return lambda x, y: np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, v)


def _gaussian(amp, rate):
    amp, rate = float(amp), float(rate)
    return lambda x, y: amp * np.exp(-rate * (np.asarray(x) ** 2 + np.asarray(y) ** 2))


def _pin_cell(inner, outer, half):
    inner, outer, half = float(inner), float(outer), float(half)

    def f(x, y):
        inside = (np.abs(x) <= half) & (np.abs(y) <= half)
        return np.where(inside, inner, outer)

    return f


def _lattice(absorber, scatter, source_value):
    absorber, scatter, source_value = float(absorber), float(scatter), float(source_value)

    def f(x, y):
        out = np.where(_lattice_mask(x, y, LATTICE_ABSORBERS), absorber, scatter)
        return np.where(_lattice_mask(x, y, [LATTICE_SOURCE]), source_value, out)

    return f


_BUILDERS = {
    "const": (_const, 1),
    "gaussian": (_gaussian, 2),
    "pin_cell": (_pin_cell, 3),
    "variable_scattering": (lambda: variable_scattering, 0),
    # value in absorber cells, in other cells, in the source cell
    "lattice": (_lattice, 3),
}


def make_field(spec: str):
    name, *args = str(spec).strip().split(":")
    if name not in _BUILDERS:
        raise FieldSpecError(f"unknown field {name!r} in spec {spec!r}")
    builder, nargs = _BUILDERS[name]
    if len(args) != nargs:
        raise FieldSpecError(f"field {name!r} takes {nargs} arguments, got {spec!r}")
    try:
        return builder(*args)
    except ValueError as exc:
        raise FieldSpecError(f"bad numeric argument in {spec!r}") from exc
