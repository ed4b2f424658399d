"""Named boundary profiles, the pinned solution family, and the manufactured pair."""
from __future__ import annotations

from functools import partial
from typing import Callable

import numpy as np

from .field import BoundaryData, Grid, ScalarField

Profile = Callable[..., np.ndarray]

FAMILY_SIZE = 10


def constant(*x, value: float = 1.0):
    return value + 0.0 * x[0]


def affine(*x, offset: float = 1.0, slope=None):
    slope = slope if slope is not None else [0.5] * len(x)
    return offset + sum(c * xi for c, xi in zip(slope, x))


def sine(*x, amplitude: float = 0.5):
    """``1 + amplitude * sin(2 pi x_N)``."""
    return 1.0 + amplitude * np.sin(2.0 * np.pi * x[-1]) + 0.0 * x[0]


def random_positive(seed: int, ndim: int = 2, modes: int = 4) -> Profile:
    """Trigonometric profile with values in ``[0.4, 1.6]``, fixed by ``seed``.

    Defined on all of R^N so the same profile can be sampled at any resolution.
    """
    rng = np.random.default_rng(seed)
    waves = rng.integers(-2, 3, size=(modes, ndim))
    waves[np.all(waves == 0, axis=1), 0] = 1
    amps = rng.uniform(0.2, 1.0, size=modes)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=modes)
    amps = 0.6 * amps / amps.sum()

    def profile(*x):
        out = 1.0 + 0.0 * x[0]
        for k, a, ph in zip(waves, amps, phases):
            out = out + a * np.cos(2.0 * np.pi * sum(kk * xi for kk, xi in zip(k, x)) + ph)
        return out

    return profile


def family(ndim: int = 2, size: int = FAMILY_SIZE, base_seed: int = 0) -> list[Profile]:
    """The pinned family of positive boundary profiles."""
    return [random_positive(base_seed + k, ndim) for k in range(size)]


NAMED: dict[str, Callable[..., Profile]] = {
    "constant": lambda value=1.0, **_: partial(constant, value=value),
    "affine": lambda offset=1.0, slope=None, **_: partial(affine, offset=offset, slope=slope),
    "sine": lambda amplitude=0.5, **_: partial(sine, amplitude=amplitude),
    "random": lambda seed=0, ndim=2, **_: random_positive(int(seed), int(ndim)),
}


def named_profile(name: str, **kwargs) -> Profile:
    try:
        factory = NAMED[name]
    except KeyError:
        raise ValueError(f"unknown boundary profile {name!r}; known: {sorted(NAMED)}") from None
    return factory(**kwargs)


def boundary(grid: Grid, profile: Profile) -> BoundaryData:
    return BoundaryData.from_function(grid, profile)


# ---------------------------------------------------------------- manufactured pair

MMS_AMPLITUDE = 0.1


def manufactured_solution(*x):
    """``x_N + 0.1 sin(pi x_1) sin(pi x_N)``."""
    return x[-1] + MMS_AMPLITUDE * np.sin(np.pi * x[0]) * np.sin(np.pi * x[-1])


def manufactured_forcing(p: float, epsilon: float = 0.0) -> Profile:
    """Continuum residual of :func:`manufactured_solution` for the prototype flux.

    Only axis 1 (nondegenerate) and axis N (singular) carry derivatives.
    """
    def forcing(*x):
        ss = np.sin(np.pi * x[0]) * np.sin(np.pi * x[-1])
        q = 1.0 + MMS_AMPLITUDE * np.pi * np.sin(np.pi * x[0]) * np.cos(np.pi * x[-1])
        e2 = epsilon * epsilon
        dA = (e2 + q * q) ** ((p - 4.0) / 2.0) * (e2 + (p - 1.0) * q * q)
        return -MMS_AMPLITUDE * np.pi ** 2 * ss * (1.0 + dA)

    return forcing


def zero_forcing(*x):
    return 0.0 * x[0]


def sample(grid: Grid, func: Profile) -> ScalarField:
    return grid.evaluate(func)
