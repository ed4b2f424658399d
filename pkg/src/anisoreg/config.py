"""INI experiment configuration: ``[equation] [grid] [boundary] [checks] [output]``."""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .field import BoundaryData, Grid
from .params import ParamsError, StructureParams, chi
from . import profiles
from .solver import FluxModel, SolverConfig, SolverError, prototype_flux

CHECKS = ("harnack", "l1linf", "supbound", "expansion", "oscdecay", "holder", "truncation", "ks")
CHI_GATED = {"harnack", "l1linf", "oscdecay"}
FLUXES = ("prototype",)


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    params: StructureParams
    flux_name: str
    epsilon: float
    dims: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    profile: str | None
    profile_args: dict
    family: int
    boundary_csv: Path | None
    checks: list[str]
    rho: list[float]
    l1linf_rho: list[float]
    delta_bar: list[float]
    centers: list[tuple[float, ...]] | None
    osc_K: float | None
    osc_centers: int
    expansion_rho: float
    expansion_nu: float
    expansion_delta: float
    holder_pairs: int
    truncation_levels: int
    truncation_bumps: int
    ks_beta: float
    mms_dims: list[int]
    mms_solution: str
    tol_residual: float
    max_sweeps: int
    method: str
    seed: int
    out_dir: Path
    formats: list[str]
    sha256: str
    source: Path | None = None
    extras: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return Grid.box(self.dims, self.lower, self.upper, self.params.s)

    @property
    def flux(self) -> FluxModel:
        return prototype_flux(self.params.p, self.epsilon)

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(tol_residual=self.tol_residual, max_sweeps=self.max_sweeps,
                            seed=self.seed, method=self.method)

    def boundaries(self) -> list[tuple[str, BoundaryData]]:
        """Labelled boundary data for every field the config describes."""
        g = self.grid
        if self.boundary_csv is not None:
            return [("csv", BoundaryData.from_csv(g, self.boundary_csv))]
        if self.family > 0:
            fam = profiles.family(g.ndim, self.family, int(self.profile_args.get("seed", 0)))
            return [(f"random{k}", profiles.boundary(g, pr)) for k, pr in enumerate(fam)]
        prof = profiles.named_profile(self.profile, ndim=g.ndim, **self.profile_args)
        return [(self.profile, profiles.boundary(g, prof))]


def _get(sec, key, conv, default=None, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"[{sec.name}] missing required key {key!r}")
        return default
    try:
        return conv(sec[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{sec.name}] {key} = {sec[key]!r}: {exc}") from None


def parse(text: str, source: Path | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for name in ("equation", "grid"):
        if not cp.has_section(name):
            raise ConfigError(f"missing section [{name}]")
    for name in ("boundary", "checks", "output"):
        if not cp.has_section(name):
            cp.add_section(name)
    eq, gr, bd, ck, out = (cp[n] for n in ("equation", "grid", "boundary", "checks", "output"))
    base = source.parent if source is not None else Path(".")

    N = _get(eq, "N", int, required=True)
    s = _get(eq, "s", int, required=True)
    p = _get(eq, "p", float, required=True)
    try:
        params = StructureParams(N, s, p, C1=_get(eq, "C1", float, 1.0), C2=_get(eq, "C2", float, 1.0),
                                 C=_get(eq, "C", float, 0.0))
    except ParamsError as exc:
        raise ConfigError(str(exc)) from None
    flux_name = _get(eq, "flux", str, "prototype")
    if flux_name not in FLUXES:
        raise ConfigError(f"unknown flux {flux_name!r}; known: {list(FLUXES)}")
    epsilon = _get(eq, "epsilon", float, 1e-8)
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")

    dims = tuple(_get(gr, "dims", _ints, required=True))
    if len(dims) == 1:
        dims = dims * N
    lower = tuple(_get(gr, "lower", _floats, [0.0] * N))
    upper = tuple(_get(gr, "upper", _floats, [1.0] * N))
    if not len(dims) == len(lower) == len(upper) == N:
        raise ConfigError("grid dims, lower and upper need N entries")
    if any(hi <= lo for lo, hi in zip(lower, upper)):
        raise ConfigError("grid box must have upper > lower on every axis")
    try:
        Grid.box(dims, lower, upper, s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    profile = _get(bd, "profile", str, None)
    csv_path = _get(bd, "csv", str, None)
    family = _get(bd, "family", int, 0)
    if sum(x is not None and x != 0 for x in (profile, csv_path, family)) != 1:
        raise ConfigError("[boundary] needs exactly one of profile, csv, family")
    if profile is not None and profile not in profiles.NAMED:
        raise ConfigError(f"unknown boundary profile {profile!r}")
    profile_args = {}
    for key in ("value", "offset", "amplitude", "seed"):
        if key in bd:
            profile_args[key] = _get(bd, key, float)
    if "slope" in bd:
        profile_args["slope"] = _get(bd, "slope", _floats)
    boundary_csv = None
    if csv_path is not None:
        boundary_csv = (base / csv_path).resolve()
        if not boundary_csv.is_file():
            raise ConfigError(f"boundary csv {boundary_csv} not found")

    checks = [c.strip() for c in _get(ck, "enabled", str, "").split(",") if c.strip()]
    unknown = sorted(set(checks) - set(CHECKS))
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; known: {list(CHECKS)}")
    if CHI_GATED & set(checks) and chi(params) <= 0:
        raise ConfigError(f"chi = {chi(params)} <= 0 but chi-gated checks are enabled")
    centers = None
    if "centers" in ck:
        centers = [tuple(_floats(c)) for c in ck["centers"].split(";") if c.strip()]
        if any(len(c) != N for c in centers):
            raise ConfigError("every center needs N coordinates")
    method = _get(ck, "method", str, "newton")
    osc_K = _get(ck, "osc_K", str, "auto")
    try:
        SolverConfig(tol_residual=_get(ck, "tol_residual", float, 1e-7),
                     max_sweeps=_get(ck, "max_sweeps", int, 200), method=method)
    except SolverError as exc:
        raise ConfigError(str(exc)) from None

    mms_solution = _get(ck, "mms_solution", str, "sine")
    if mms_solution not in ("sine", "affine"):
        raise ConfigError(f"unknown manufactured solution {mms_solution!r}")

    formats = [f.strip() for f in _get(out, "formats", str, "csv,anis").split(",") if f.strip()]
    if set(formats) - {"csv", "anis"}:
        raise ConfigError(f"unsupported output formats {formats}")

    return ExperimentConfig(
        params=params, flux_name=flux_name, epsilon=epsilon, dims=dims, lower=lower, upper=upper,
        profile=profile, profile_args=profile_args, family=family, boundary_csv=boundary_csv,
        checks=checks,
        rho=_get(ck, "rho", _floats, [0.05, 0.1, 0.2]),
        l1linf_rho=_get(ck, "l1linf_rho", _floats, [1 / 32, 1 / 64]),
        delta_bar=_get(ck, "delta_bar", _floats, [1.0]),
        centers=centers,
        osc_K=None if osc_K == "auto" else float(osc_K),
        osc_centers=_get(ck, "osc_centers", int, 10),
        expansion_rho=_get(ck, "expansion_rho", float, 0.1),
        expansion_nu=_get(ck, "expansion_nu", float, 0.5),
        expansion_delta=_get(ck, "expansion_delta", float, 0.25),
        holder_pairs=_get(ck, "holder_pairs", int, 1000),
        truncation_levels=_get(ck, "truncation_levels", int, 5),
        truncation_bumps=_get(ck, "truncation_bumps", int, 20),
        ks_beta=_get(ck, "ks_beta", float, 1.0),
        mms_dims=_get(ck, "mms_dims", _ints, [17, 33, 65]),
        mms_solution=mms_solution,
        tol_residual=_get(ck, "tol_residual", float, 1e-7),
        max_sweeps=_get(ck, "max_sweeps", int, 200),
        method=method,
        seed=_get(ck, "seed", int, 0),
        out_dir=(base / _get(out, "directory", str, "out")),
        formats=formats,
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        source=source,
    )


def load(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse(text, path)
