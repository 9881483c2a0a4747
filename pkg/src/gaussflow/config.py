"""Run configuration: JSON text in, validated pydantic models out."""

import json
import math
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .flow import StepControl

_STRICT = ConfigDict(extra="forbid", frozen=True)


class SphereParams(BaseModel):
    model_config = _STRICT
    r: float = Field(gt=0.0, le=15.0)


class CosineParams(BaseModel):
    """rho(psi) = r0 + eps cos(mode psi)."""

    model_config = _STRICT
    r0: float = Field(gt=0.0, le=15.0)
    eps: float
    mode: Literal[1, 2] = 1

    @model_validator(mode="after")
    def _positive(self):
        if not abs(self.eps) < self.r0:
            raise ValueError(f"|eps| must be < r0 so the field stays positive (eps={self.eps}, r0={self.r0})")
        return self


class OffcenterParams(BaseModel):
    """Geodesic sphere of radius r whose centre sits at distance d along the axis."""

    model_config = _STRICT
    r: float = Field(gt=0.0, le=15.0)
    d: float = Field(ge=0.0)

    @model_validator(mode="after")
    def _origin_inside(self):
        if not self.d < self.r:
            raise ValueError(f"d must be < r so the origin lies inside the sphere (d={self.d}, r={self.r})")
        return self


class TableParams(BaseModel):
    """Tabulated rho(psi) on [0, pi], interpolated by a clamped cubic spline."""

    model_config = _STRICT
    psi: list[float] = Field(min_length=4)
    rho: list[float] = Field(min_length=4)

    @field_validator("rho")
    @classmethod
    def _finite_positive(cls, v):
        for i, x in enumerate(v):
            if not (math.isfinite(x) and x > 0.0):
                raise ValueError(f"rho[{i}]={x!r} must be finite and positive")
        return v

    @model_validator(mode="after")
    def _table(self):
        if len(self.psi) != len(self.rho):
            raise ValueError(f"psi and rho lengths differ ({len(self.psi)} vs {len(self.rho)})")
        if any(b <= a for a, b in zip(self.psi, self.psi[1:])):
            raise ValueError("psi must be strictly increasing")
        if abs(self.psi[0]) > 1e-12 or abs(self.psi[-1] - math.pi) > 1e-12:
            raise ValueError("psi must start at 0 and end at pi")
        return self


class SphereShape(BaseModel):
    model_config = _STRICT
    kind: Literal["sphere"]
    params: SphereParams


class CosineShape(BaseModel):
    model_config = _STRICT
    kind: Literal["cosine"]
    params: CosineParams


class OffcenterShape(BaseModel):
    model_config = _STRICT
    kind: Literal["offcenter"]
    params: OffcenterParams


class TableShape(BaseModel):
    model_config = _STRICT
    kind: Literal["custom-table"]
    params: TableParams


ShapeSpec = Annotated[
    Union[SphereShape, CosineShape, OffcenterShape, TableShape],
    Field(discriminator="kind"),
]


class CtrlConfig(BaseModel):
    model_config = _STRICT
    cfl_safety: float = Field(0.2, gt=0.0, le=1.0)
    dt_min: float = Field(1e-10, gt=0.0)
    dt_max: float = Field(1e-2, gt=0.0)
    t_max: float = Field(100.0, ge=0.0)
    osc_tol: float = Field(1e-7, ge=0.0)

    @model_validator(mode="after")
    def _bounds(self):
        if self.dt_min > self.dt_max:
            raise ValueError(f"dt_min ({self.dt_min}) exceeds dt_max ({self.dt_max})")
        return self

    def step_control(self):
        return StepControl(**self.model_dump())


class OutputConfig(BaseModel):
    model_config = _STRICT
    trace_path: str | None = None
    snapshot_every: int = Field(0, ge=0)
    snapshot_dir: str | None = None
    trace_every: int = Field(1, ge=1)


class RunConfig(BaseModel):
    model_config = _STRICT
    n: int = Field(ge=2, le=5)
    m: int = Field(ge=16, le=8192)
    shape: ShapeSpec
    ctrl: CtrlConfig = CtrlConfig()
    outputs: OutputConfig = OutputConfig()
    seed: int = 0


def _describe(exc: ValidationError):
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def config_from_dict(data) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_describe(exc)}") from exc


def parse_config(text) -> RunConfig:
    """Validate JSON config text, filling defaults."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(data)
