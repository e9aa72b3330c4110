"""Run configuration: a strict, versioned JSON schema."""

from __future__ import annotations

import json
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator, model_validator

from .model import GasParams, ModelError
from .ou import RenormalizedParams

SCHEMA_VERSION = 1
EXPERIMENTS = ("chain", "time", "boltzmann", "ou-converge", "crossings", "hitting", "temperature", "dephasing", "kubo")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` holds one message per offending field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


PosFloat = Annotated[float, Field(gt=0)]
PosInt = Annotated[int, Field(ge=1)]


class GasBlock(_Strict):
    m_p: PosFloat
    m_q: PosFloat
    sigma0_sq: PosFloat
    sigmax_sq: PosFloat
    lam: PosFloat = Field(alias="lambda")

    @model_validator(mode="after")
    def _model_preconditions(self):
        try:
            self.gas()
        except ModelError as exc:
            raise ValueError(str(exc)) from None
        return self

    def gas(self) -> GasParams:
        return GasParams(self.m_p, self.m_q, self.sigma0_sq, self.sigmax_sq, self.lam)


def _increasing(values, name):
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} must be strictly increasing")
    return values


class _Common(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: Annotated[int, Field(ge=0, lt=2**64)] = 0
    workers: PosInt = 1
    block_size: PosInt = 1024
    output_dir: Optional[str] = None


class ChainConfig(_Common):
    experiment: Literal["chain"]
    params: GasBlock
    n: Annotated[int, Field(ge=0)]
    trials: Annotated[int, Field(ge=2)]
    export_trajectories: Annotated[int, Field(ge=0)] = 100


class TimeConfig(_Common):
    experiment: Literal["time"]
    params: GasBlock
    times: Annotated[list[Annotated[float, Field(ge=0)]], Field(min_length=1)]
    trials: Annotated[int, Field(ge=2)]
    export_trajectories: Annotated[int, Field(ge=0)] = 10
    density_points: Annotated[int, Field(ge=3)] = 801
    density_tol: Annotated[float, Field(gt=0, lt=1)] = 1e-12

    _times = field_validator("times")(lambda v: _increasing(v, "times"))


class BoltzmannConfig(_Common):
    experiment: Literal["boltzmann"]
    params: GasBlock
    times: Annotated[list[PosFloat], Field(min_length=1)]
    dt: PosFloat
    grid_points: Annotated[int, Field(ge=16)] = 2048
    v_max: Optional[PosFloat] = None
    quadrature: Literal["substitution", "interpolation"] = "substitution"
    mass_tol: PosFloat = 1e-8
    clip_tol: PosFloat = 1e-6
    density_tol: Annotated[float, Field(gt=0, lt=1)] = 1e-12

    _times = field_validator("times")(lambda v: _increasing(v, "times"))

    @model_validator(mode="after")
    def _step_size(self):
        if self.dt * self.params.lam > 0.1 + 1e-12:
            raise ValueError(
                f"step-size rejection: dt*lambda = {self.dt * self.params.lam:g} exceeds the stability margin 0.1"
            )
        return self


class OUConvergeConfig(_Common):
    experiment: Literal["ou-converge"]
    alpha: Annotated[float, Field(gt=0, lt=1)]
    lambda_n: Annotated[list[PosFloat], Field(min_length=1)]
    sigma_x0: Annotated[float, Field(ge=0)]
    sigma0_sq: Annotated[float, Field(ge=0)]
    t_eval: Annotated[list[PosFloat], Field(min_length=1)]
    trials: PosInt
    epsilon: PosFloat = 0.1
    refine: PosInt = 10
    block_size: PosInt = 1

    _lam = field_validator("lambda_n")(lambda v: _increasing(v, "lambda_n"))
    _t = field_validator("t_eval")(lambda v: _increasing(v, "t_eval"))

    def renormalized(self) -> RenormalizedParams:
        return RenormalizedParams(self.alpha, tuple(self.lambda_n), self.sigma_x0, self.sigma0_sq)


class RecurrenceBlock(_Strict):
    k: Annotated[int, Field(ge=0)]
    n_max: Annotated[list[PosInt], Field(min_length=1)]
    trials: PosInt

    _n = field_validator("n_max")(lambda v: _increasing(v, "n_max"))


class CrossingsConfig(_Common):
    experiment: Literal["crossings"]
    params: GasBlock
    n_max: PosInt
    trials: Annotated[int, Field(ge=2)]
    times: Optional[list[PosFloat]] = None
    recurrence: Optional[RecurrenceBlock] = None

    _times = field_validator("times")(lambda v: v if v is None else _increasing(v, "times"))


class HittingConfig(_Common):
    experiment: Literal["hitting"]
    params: GasBlock
    n_cap: PosInt
    trials: Annotated[int, Field(ge=2)]


class TemperatureConfig(_Common):
    experiment: Literal["temperature"]
    params: GasBlock
    ratios: Annotated[list[PosFloat], Field(min_length=1)]
    mode: Literal["fixed", "inverse"] = "fixed"
    n_cap: PosInt = 10_000
    trials: Annotated[int, Field(ge=0)] = 10_000

    @field_validator("trials")
    @classmethod
    def _no_single_trial(cls, v):
        if v == 1:
            raise ValueError("trials must be 0 (bound only) or >= 2")
        return v


class DephasingConfig(_Common):
    experiment: Literal["dephasing"]
    params: GasBlock
    ensemble_size: PosInt
    horizon: PosFloat
    dt_sample: PosFloat
    state_traces: Annotated[int, Field(ge=0)] = 0

    @model_validator(mode="after")
    def _traces(self):
        if self.state_traces > self.ensemble_size:
            raise ValueError("state_traces cannot exceed ensemble_size")
        return self


class KuboConfig(_Common):
    experiment: Literal["kubo"]
    omega0: float = 20.0
    sigma_w: Annotated[float, Field(ge=0)] = 1.0
    horizon: PosFloat = 2.0
    dt: PosFloat = 1e-3
    n_traces: PosInt = 2
    envelope_paths: Annotated[int, Field(ge=0)] = 0
    envelope_times: Optional[list[PosFloat]] = None

    @model_validator(mode="after")
    def _envelope(self):
        if self.envelope_paths == 1:
            raise ValueError("envelope_paths must be 0 or >= 2")
        if self.envelope_times and max(self.envelope_times) > self.horizon:
            raise ValueError("envelope_times must lie within the horizon")
        return self


RunConfig = Annotated[
    Union[
        ChainConfig,
        TimeConfig,
        BoltzmannConfig,
        OUConvergeConfig,
        CrossingsConfig,
        HittingConfig,
        TemperatureConfig,
        DephasingConfig,
        KuboConfig,
    ],
    Field(discriminator="experiment"),
]
_ADAPTER = TypeAdapter(RunConfig)


def _no_duplicates(pairs):
    keys = [k for k, _ in pairs]
    dupes = sorted({k for k in keys if keys.count(k) > 1})
    if dupes:
        raise ConfigError([f"duplicate key: {k}" for k in dupes])
    return dict(pairs)


def _format(err) -> str:
    loc = ".".join(str(x) for x in err["loc"]) or "<root>"
    msg = err["msg"]
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    return f"{loc}: {msg}"


def parse_config(text: str):
    """Parse and validate a JSON config document; raises ``ConfigError``."""
    try:
        raw = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    try:
        return _ADAPTER.validate_python(raw)
    except ValidationError as exc:
        raise ConfigError([_format(e) for e in exc.errors()]) from None


def config_schema() -> dict:
    return _ADAPTER.json_schema(by_alias=True)


def dump_config(cfg) -> dict:
    return cfg.model_dump(mode="json", by_alias=True)
