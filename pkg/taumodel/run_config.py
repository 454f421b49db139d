"""
Run configuration: the JSON schema behind every CLI command.

Configs are validated with pydantic before any computation; scalars may be
integers, rational strings ("3/4") or, in float mode only, floats. Builders turn
a validated RunConfig into the engine's value types.

Usage:
    from taumodel.run_config import load_run_config, build_chain

    cfg = load_run_config("fixtures/two_atom_p2_n2.json")
    chain = build_chain(cfg)
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import AfterValidator, BaseModel, Field, ValidationError, field_validator, model_validator

from taumodel.config import BAND, DEFAULT_MODE, ROUTES, SEED, TAYLOR_ORDER, TODA_STEP, TOLERANCE, WINDOW, WORKERS
from taumodel.ensemble import (
    Atom,
    BilinearSpec,
    ChainSpec,
    DiscreteMeasure,
    EnsembleError,
    LoopChainSpec,
    PolynomialKernel,
    TableKernel,
    TimeDeformation,
    hermitian_chain_preset,
)
from taumodel.fock import FockError, ModeWindow, WindowError, kernel_from_g
from taumodel.numerics import Mode, ModeMismatchError, to_scalar


class ConfigError(ValueError):
    """Raised when a run configuration cannot be read, validated or built."""


def _check_scalar(value):
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(value, str):
        try:
            Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"not a rational number: {value!r}") from None
    return value


ScalarValue = Annotated[Union[int, float, str], AfterValidator(_check_scalar)]


class MeasureConfig(BaseModel):
    """Atoms as [x, y, w] triples."""
    atoms: List[Tuple[ScalarValue, ScalarValue, ScalarValue]] = Field(min_length=1, description="[x, y, w] atoms")
    label: Optional[int] = Field(default=None, ge=1)


class KernelConfig(BaseModel):
    kind: Literal["polynomial", "table", "group"]
    coefficients: List[Tuple[int, int, ScalarValue]] = Field(default_factory=list, description="[m, n, c] for c y^m x^n")
    ys: List[ScalarValue] = Field(default_factory=list)
    xs: List[ScalarValue] = Field(default_factory=list)
    values: List[List[ScalarValue]] = Field(default_factory=list, description="one row per y point")

    @model_validator(mode="after")
    def _check_shape(self) -> "KernelConfig":
        if self.kind == "table":
            if not self.ys or not self.xs:
                raise ValueError("table kernels need nonempty ys and xs")
            if len(self.values) != len(self.ys) or any(len(row) != len(self.xs) for row in self.values):
                raise ValueError(f"table values must be {len(self.ys)}x{len(self.xs)}")
        elif self.kind == "polynomial":
            if any(m < 0 or n < 0 for m, n, _ in self.coefficients):
                raise ValueError("polynomial powers must be nonnegative")
        return self


class BilinearConfig(BaseModel):
    component: int = Field(ge=1)
    terms: List[Tuple[int, int, ScalarValue]] = Field(default_factory=list, description="[i, j, h_ij]")


class PresetConfig(BaseModel):
    """Discretized Hermitian chain; potentials list coefficients by power."""
    potentials: List[List[float]] = Field(min_length=2)
    couplings: List[float]
    grids: List[List[float]]


class ChainConfig(BaseModel):
    p: int = Field(ge=1)
    N: int = Field(ge=0)
    closed: bool = False
    measures: List[MeasureConfig] = Field(default_factory=list)
    kernels: List[KernelConfig] = Field(default_factory=list)
    preset: Optional[PresetConfig] = None

    @model_validator(mode="after")
    def _check_counts(self) -> "ChainConfig":
        if self.preset is not None:
            if self.closed:
                raise ValueError("the Hermitian preset builds open chains only")
            if len(self.preset.potentials) != 2 * self.p - 2:
                raise ValueError(f"p={self.p} needs {2 * self.p - 2} potentials")
            return self
        if self.closed:
            if len(self.measures) != self.p or len(self.kernels) != self.p:
                raise ValueError(f"a closed chain with p={self.p} needs {self.p} measures and {self.p} kernels")
            return self
        if self.p < 2:
            raise ValueError("an open chain needs p >= 2")
        if len(self.measures) != self.p - 1:
            raise ValueError(f"p={self.p} needs {self.p - 1} measures, got {len(self.measures)}")
        if len(self.kernels) != self.p - 2:
            raise ValueError(f"p={self.p} needs {self.p - 2} kernels, got {len(self.kernels)}")
        return self


class WindowConfig(BaseModel):
    M: int = Field(default=WINDOW, ge=1)
    band: Optional[int] = Field(default=BAND, ge=1)


class DeformationConfig(BaseModel):
    t: List[List[float]]
    tbar: List[List[float]]
    n: List[int]

    @model_validator(mode="after")
    def _check_lengths(self) -> "DeformationConfig":
        if not (len(self.t) == len(self.tbar) == len(self.n)):
            raise ValueError("t, tbar and n need one entry per component")
        return self


class TodaConfig(BaseModel):
    h: float = Field(default=TODA_STEP, gt=0)
    halve: bool = True


class MiwaConfig(BaseModel):
    xs: List[float] = Field(min_length=2)
    ys: List[float] = Field(min_length=2)
    depth: int = Field(default=6, ge=1)
    charge: int = 0
    component: int = Field(default=2, ge=1, description="which group element the kernel check reads")


class VerifyConfig(BaseModel):
    families: int = Field(default=17, ge=1, description="random chains per (p, N); 12 (p, N) pairs")
    max_atoms: int = Field(default=4, ge=1)


class RunConfig(BaseModel):
    mode: Literal["exact", "float"] = DEFAULT_MODE
    chain: Optional[ChainConfig] = None
    gspecs: List[BilinearConfig] = Field(default_factory=list)
    window: WindowConfig = Field(default_factory=WindowConfig)
    routes: List[Literal["bruteforce", "desym", "det", "fock"]] = Field(default_factory=lambda: list(ROUTES))
    deformation: Optional[DeformationConfig] = None
    toda: TodaConfig = Field(default_factory=TodaConfig)
    miwa: Optional[MiwaConfig] = None
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    seed: int = SEED
    workers: int = Field(default=WORKERS, ge=1)
    taylor_order: int = Field(default=TAYLOR_ORDER, ge=1)
    tolerance: float = Field(default=TOLERANCE, gt=0, lt=1)

    @field_validator("routes", mode="before")
    @classmethod
    def _expand_all(cls, value):
        if value == "all" or value == ["all"]:
            return list(ROUTES)
        if isinstance(value, str):
            return [value]
        return value


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _line_of(text: str, loc: Sequence) -> Optional[int]:
    """Line holding the innermost key of a pydantic error location."""
    pos, found = 0, None
    for part in loc:
        if not isinstance(part, str):
            continue
        hit = text.find(f'"{part}"', pos)
        if hit < 0:
            break
        pos = found = hit
    return None if found is None else text.count("\n", 0, found) + 1


def _format_errors(exc: ValidationError, text: str, source: str) -> str:
    lines = [f"invalid run configuration {source}:"]
    for error in exc.errors():
        loc = ".".join(str(part) for part in error["loc"]) or "(root)"
        line = _line_of(text, error["loc"])
        where = f" (line {line})" if line else ""
        lines.append(f"  {loc}{where}: {error['msg']}")
    return "\n".join(lines)


def parse_run_config(text: str, overrides: Optional[Dict[str, Any]] = None, source: str = "<string>") -> RunConfig:
    """Validate config text; `overrides` replace top-level keys (CLI flags)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source} is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source} must hold a JSON object")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "window":
            data["window"] = {**data.get("window", {}), "M": value}
        else:
            data[key] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, text, source)) from exc


def load_run_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_run_config(path.read_text(encoding="utf-8"), overrides, str(path))


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _mode(cfg: RunConfig) -> Mode:
    return Mode(cfg.mode)


def _scalar(value, mode: Mode, where: str):
    try:
        return to_scalar(value, mode)
    except ModeMismatchError as exc:
        raise ConfigError(f"{where}: floats are only accepted in float mode ({exc})") from exc


def _build_measure(m: MeasureConfig, label: int, mode: Mode, where: str) -> DiscreteMeasure:
    atoms = tuple(Atom(*(_scalar(v, mode, f"{where}.atoms.{i}") for v in triple)) for i, triple in enumerate(m.atoms))
    return DiscreteMeasure(atoms, m.label or label)


def _build_kernel(k: KernelConfig, mode: Mode, where: str):
    if k.kind == "polynomial":
        coefficients: Dict[Tuple[int, int], Any] = {}
        for m, n, c in k.coefficients:
            coefficients[(m, n)] = coefficients.get((m, n), 0) + _scalar(c, mode, where)
        return PolynomialKernel({key: _scalar(v, mode, where) for key, v in coefficients.items()})
    return TableKernel(
        tuple(_scalar(v, mode, where) for v in k.ys),
        tuple(_scalar(v, mode, where) for v in k.xs),
        tuple(tuple(_scalar(v, mode, where) for v in row) for row in k.values),
    )


def _require_chain(cfg: RunConfig) -> ChainConfig:
    if cfg.chain is None:
        raise ConfigError("this command needs a 'chain' section")
    return cfg.chain


def _group_kernel(cfg: RunConfig, index: int, measures: Sequence[DiscreteMeasure]) -> TableKernel:
    """Table of rho_from_g for the group element acting on component index + 2."""
    alpha = index + 2
    gspecs = {g.component: g for g in build_gspecs(cfg)}
    if alpha not in gspecs:
        raise ConfigError(f"chain.kernels.{index} is a group kernel but no gspec acts on component {alpha}")
    window = build_window(cfg, cfg.chain.p)
    return kernel_from_g(gspecs[alpha], measures[index].ys, measures[index + 1].xs, window, order=cfg.taylor_order)


def build_chain(cfg: RunConfig) -> ChainSpec:
    """The open chain described by the config."""
    c = _require_chain(cfg)
    mode = _mode(cfg)
    if c.closed:
        raise ConfigError("chain.closed is set; use the loop command")
    try:
        if c.preset is not None:
            if mode is not Mode.FLOAT:
                raise ConfigError("the Hermitian preset is a float-mode construction; set mode to float")
            return hermitian_chain_preset(c.preset.potentials, c.preset.couplings, c.preset.grids, N=c.N)
        measures = tuple(_build_measure(m, a, mode, f"chain.measures.{a - 1}") for a, m in enumerate(c.measures, start=1))
        kernels = []
        for a, k in enumerate(c.kernels):
            if k.kind == "group":
                kernels.append(_group_kernel(cfg, a, measures))
            else:
                kernels.append(_build_kernel(k, mode, f"chain.kernels.{a}"))
        return ChainSpec(c.p, c.N, measures, tuple(kernels))
    except (EnsembleError, FockError) as exc:
        raise ConfigError(f"chain: {exc}") from exc


def build_loop_chain(cfg: RunConfig) -> LoopChainSpec:
    c = _require_chain(cfg)
    mode = _mode(cfg)
    if not c.closed:
        raise ConfigError("the loop command needs chain.closed = true")
    try:
        measures = tuple(_build_measure(m, a, mode, f"chain.measures.{a - 1}") for a, m in enumerate(c.measures, start=1))
        kernels = tuple(_build_kernel(k, mode, f"chain.kernels.{a}") for a, k in enumerate(c.kernels))
        return LoopChainSpec(c.p, c.N, measures, kernels)
    except EnsembleError as exc:
        raise ConfigError(f"chain: {exc}") from exc


def build_gspecs(cfg: RunConfig) -> List[BilinearSpec]:
    mode = _mode(cfg)
    return [
        BilinearSpec(g.component, tuple((i, j, _scalar(h, mode, f"gspecs.{a}")) for i, j, h in g.terms))
        for a, g in enumerate(cfg.gspecs)
    ]


def build_window(cfg: RunConfig, p: int) -> ModeWindow:
    try:
        return ModeWindow(p, cfg.window.M, cfg.window.band)
    except WindowError as exc:
        raise ConfigError(f"window: {exc}") from exc


def build_deformation(cfg: RunConfig, p: int) -> TimeDeformation:
    if cfg.deformation is None:
        return TimeDeformation.zero(p)
    d = cfg.deformation
    if len(d.n) != p:
        raise ConfigError(f"deformation has {len(d.n)} components, chain has p={p}")
    return TimeDeformation(tuple(map(tuple, d.t)), tuple(map(tuple, d.tbar)), tuple(d.n))
