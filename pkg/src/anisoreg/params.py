"""Exponent algebra for the (2, p) anisotropic split.

The first ``s`` directions carry the Laplacian (exponent 2), the remaining
``N - s`` directions carry a singular p-growth flux with ``1 < p < 2``.
Everything here is a pure function of a handful of numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


class ParamsError(ValueError):
    """Raised for exponent/dimension combinations outside the admissible class."""


@dataclass(frozen=True)
class StructureParams:
    """Data of the equation class: dimension, split, exponent and structure constants.

    ``strict=False`` admits ``p = 2`` so that limit formulas can be cross-checked;
    solvers and verifiers always build strict instances.
    """

    N: int
    s: int
    p: float
    C1: float = 1.0
    C2: float = 1.0
    C: float = 0.0
    strict: bool = True

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ParamsError(f"N must be an integer >= 2, got {self.N}")
        if int(self.s) != self.s or not 1 <= self.s <= self.N - 1:
            raise ParamsError(f"s must lie in [1, N-1] = [1, {self.N - 1}], got {self.s}")
        upper_ok = self.p < 2 if self.strict else self.p <= 2
        if not (1 < self.p and upper_ok):
            raise ParamsError(f"p must lie in (1, 2){'' if self.strict else ']'}, got {self.p}")
        if self.C1 <= 0 or self.C2 <= 0 or self.C < 0:
            raise ParamsError("structure constants need C1 > 0, C2 > 0, C >= 0")

    @property
    def singular_axes(self) -> range:
        return range(self.s, self.N)


@dataclass(frozen=True)
class ExponentTable:
    pbar: float
    pbar_star: float
    chi: float
    lambda_1: float
    lambda_2: float

    def lambda_(self, l: float) -> float:
        # linear in l, so two samples determine it
        return self.lambda_1 + (l - 1.0) * (self.lambda_2 - self.lambda_1)


@dataclass(frozen=True)
class IntrinsicScale:
    M: float
    rho: float
    delta_bar: float
    p: float

    @property
    def theta(self) -> float:
        return intrinsic_theta(self.M, self.rho, self.p, self.delta_bar)


def _check_split(params: StructureParams) -> None:
    if not 1 <= params.s <= params.N - 1:
        raise ParamsError(f"s={params.s} outside [1, N-1]")


def harmonic_mean(params: StructureParams) -> float:
    """Harmonic mean of the exponents (2,...,2,p,...,p): 2Np / (2(N-s) + ps)."""
    _check_split(params)
    N, s, p = params.N, params.s, params.p
    return 2.0 * N * p / (2.0 * (N - s) + p * s)


def sobolev_exponent(params: StructureParams) -> float:
    pbar = harmonic_mean(params)
    N = params.N
    if pbar >= N:
        return math.inf
    return N * pbar / (N - pbar)


def chi(params: StructureParams) -> float:
    return params.p + (params.N - params.s) * (params.p - 2.0)


def lambda_l(params: StructureParams, l: float) -> float:
    if not 1.0 <= l <= 2.0:
        raise ParamsError(f"l must lie in [1, 2], got {l}")
    # N (pbar - 2) + l pbar rewritten so that sign(lambda_1) == sign(chi) exactly
    N, s, p = params.N, params.s, params.p
    return 2.0 * N * (chi(params) + (l - 1.0) * p) / (2.0 * (N - s) + p * s)


def is_supercritical(params: StructureParams) -> bool:
    return chi(params) > 0


def exponent_table(params: StructureParams) -> ExponentTable:
    return ExponentTable(
        pbar=harmonic_mean(params),
        pbar_star=sobolev_exponent(params),
        chi=chi(params),
        lambda_1=lambda_l(params, 1.0),
        lambda_2=lambda_l(params, 2.0),
    )


def intrinsic_theta(M: float, rho: float, p: float, delta_bar: float = 1.0) -> float:
    """Nondegenerate radius coupled to height ``M`` and singular radius ``rho``.

    ``delta_bar * M**((2-p)/2) * rho**(p/2)``; with ``delta_bar = 1`` and
    ``M = ||u||_inf`` this is the containment height used by the Harnack check.
    """
    if M <= 0 or rho <= 0 or delta_bar <= 0:
        raise ParamsError("intrinsic_theta needs M, rho, delta_bar > 0")
    return delta_bar * M ** ((2.0 - p) / 2.0) * rho ** (p / 2.0)
