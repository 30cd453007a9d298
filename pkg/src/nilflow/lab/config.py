"""Experiment configuration: JSON files validated by pydantic models.

All real parameters are decimal or symbolic strings; binary floats are
rejected so a config pins down its inputs exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigInvalid, GrammarError
from ..hardy import parse_constant, parse_expr

__all__ = [
    "CLAIMS",
    "KINDS",
    "GroupSpec",
    "SequenceSpec",
    "TestFunctionSpec",
    "SigmaConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "config_hash",
]

KINDS = ("torus", "negative-control", "orbit", "joint", "blocks", "random", "obstruction")

CLAIMS = {
    "equidistribution-mod-1": "Hardy sequences staying away from polynomials by more than log t are equidistributed mod 1",
    "pointwise-good-trichotomy": "which Hardy sequences are pointwise good for nilsystems: three growth regimes",
    "single-nil-orbit": "b^[a(n)] x equidistributes on a nilmanifold for an ergodic nilrotation b",
    "several-nil-orbits": "joint orbits (b_i^[a_i(n)] x_i) equidistribute on products for distinct growth rates",
    "torus-powers": "([a(n)]^k beta) is equidistributed mod 1 for irrational beta",
    "random-sparse-sequences": "random sparse subsequences with n sigma_n -> infinity give the same orbit averages",
}

METRICS = {
    "torus": {"star_discrepancy", "l2_star_discrepancy", "weyl_modulus"},
    "negative-control": {"star_discrepancy", "l2_star_discrepancy", "weyl_modulus"},
    "orbit": {"haar_gap", "distance_class", "horizontal_l2"},
    "joint": {"haar_gap", "horizontal_l2"},
    "blocks": {"block_weyl_aggregate", "direct_weyl", "block_bound", "block_weyl_max",
               "r_block_mean_abs", "r_block_model_bound", "r_block_small_fraction"},
    "random": {"growth_ratio", "count_ratio", "sparse_gap", "moment", "moment_bound"},
    "obstruction": {"cinf_norm", "obstructed"},
}


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, strict=True)


def _check_constant(v: str) -> str:
    try:
        parse_constant(v)
    except (GrammarError, ValueError) as e:
        raise ValueError(f"bad constant {v!r}: {e}") from None
    return v


class GroupSpec(_Model):
    """b in UT(dim); ``b`` lists the strictly-upper entries row by row, or
    (x, y, z) when ``layout`` is "heisenberg"."""

    dim: int = Field(3, ge=2, le=8)
    b: list[str]
    layout: Literal["entries", "heisenberg"] = "entries"
    x0: list[str] | None = None
    assume_ergodic: bool = False

    @field_validator("b", "x0")
    @classmethod
    def _constants(cls, v):
        if v is not None:
            for s in v:
                _check_constant(s)
        return v

    @model_validator(mode="after")
    def _shape(self):
        need = self.dim * (self.dim - 1) // 2
        if self.layout == "heisenberg" and self.dim != 3:
            raise ValueError("heisenberg layout needs dim 3")
        if len(self.b) != need:
            raise ValueError(f"b needs {need} entries for dim {self.dim}")
        if self.x0 is not None and len(self.x0) != need:
            raise ValueError(f"x0 needs {need} coordinates")
        return self


class SequenceSpec(_Model):
    """x_n = scale * a(n) or scale * [a(n)]^power (with ``integer_part``)."""

    expr: str
    integer_part: bool = False
    power: int = Field(1, ge=1, le=4)
    scale: str = "1"

    @field_validator("expr")
    @classmethod
    def _expr(cls, v):
        try:
            parse_expr(v)
        except (GrammarError, ValueError) as e:
            raise ValueError(f"bad expression {v!r}: {e}") from None
        return v

    @field_validator("scale")
    @classmethod
    def _scale(cls, v):
        return _check_constant(v)


class TestFunctionSpec(_Model):
    kind: Literal["character", "bump", "constant"]
    kappa: list[int] | None = None
    columns: list[int] | None = None
    value: str = "1"

    @model_validator(mode="after")
    def _fields(self):
        if self.kind == "character":
            if not self.kappa or not any(self.kappa):
                raise ValueError("a character needs a non-zero kappa")
            if self.columns is not None and len(self.columns) != len(self.kappa):
                raise ValueError("kappa and columns differ in length")
        if self.kind == "bump" and not self.columns:
            raise ValueError("a bump needs columns")
        return self


class SigmaConfig(_Model):
    form: Literal["power", "table", "custom"]
    c: str = "0"
    table: list[str] = []
    expr: str = ""
    negative_control: bool = False


class ExperimentConfig(_Model):
    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    kind: Literal["torus", "negative-control", "orbit", "joint", "blocks", "random", "obstruction"]
    claim: Literal[tuple(CLAIMS)]
    description: str = ""
    N: list[int]
    metrics: list[str]
    bits: int = Field(192, ge=64, le=4096)
    seed: int = Field(0, ge=0)
    M: int = Field(10, ge=1, le=50)
    # the L2 metrics cost O(N^2); they are reported only up to this N
    l2_max_N: int = Field(20000, ge=1)
    kappa: list[int] = [1]
    sequences: list[Union[str, SequenceSpec]] = []
    group: GroupSpec | None = None
    groups: list[GroupSpec] | None = None
    test_functions: list[TestFunctionSpec] = []
    # blocks
    degree: int | None = Field(None, ge=1, le=8)
    theta: str | None = None
    R: int | None = Field(None, ge=1)
    eps: str = "1/20"
    # random
    sigma: SigmaConfig | None = None
    seeds: int = Field(1, ge=1, le=1000)
    moment_sigma: SigmaConfig | None = None
    moment_trials: int = Field(500, ge=100)
    # obstruction: monomial coefficients c_0, c_1, ... per torus coordinate
    polys: list[list[str]] = []
    out_dir: str | None = None

    @field_validator("N")
    @classmethod
    def _grid(cls, v):
        if not v:
            raise ValueError("the N grid is empty")
        if any(n < 1 for n in v):
            raise ValueError("N values must be positive")
        if len(set(v)) != len(v):
            raise ValueError("N values must be distinct")
        return sorted(v)

    @field_validator("sequences")
    @classmethod
    def _seqs(cls, v):
        for s in v:
            if isinstance(s, str):
                SequenceSpec._expr(s)
        return v

    @field_validator("eps", "theta")
    @classmethod
    def _consts(cls, v):
        return v if v is None else _check_constant(v)

    @field_validator("polys")
    @classmethod
    def _polys(cls, v):
        for p in v:
            for c in p:
                _check_constant(c)
        return v

    @model_validator(mode="after")
    def _kind_fields(self):
        bad = set(self.metrics) - METRICS[self.kind]
        if not self.metrics or bad:
            raise ValueError(f"metrics for {self.kind} must be a non-empty subset of {sorted(METRICS[self.kind])}")
        if not any(self.kappa):
            raise ValueError("kappa must be non-zero")
        k = self.kind
        if k in ("torus", "negative-control", "blocks", "orbit") and not self.sequences:
            raise ValueError(f"{k} needs sequences")
        if k in ("orbit", "random") and self.group is None:
            raise ValueError(f"{k} needs a group")
        if k == "orbit" and len(self.sequences) != 1:
            raise ValueError("orbit takes one sequence")
        if k == "joint":
            if not self.groups or len(self.groups) != len(self.sequences):
                raise ValueError("joint needs one group per sequence")
        if k in ("orbit", "joint", "random") and not self.test_functions:
            raise ValueError(f"{k} needs test functions")
        if k == "random" and self.sigma is None:
            raise ValueError("random needs sigma")
        if k == "obstruction" and not self.polys:
            raise ValueError("obstruction needs polys")
        if k in ("torus", "negative-control") and len(self.kappa) != len(self.sequences):
            raise ValueError("kappa needs one entry per sequence")
        return self

    def sequence_specs(self) -> list[SequenceSpec]:
        return [SequenceSpec(expr=s) if isinstance(s, str) else s for s in self.sequences]


def _raise(e: ValidationError, source) -> None:
    first = e.errors()[0]
    loc = ".".join(str(x) for x in first["loc"])
    raise ConfigInvalid(f"{source}: {loc}: {first['msg']}") from None


def parse_config(data: dict | str, source: str = "<config>") -> ExperimentConfig:
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as e:
            raise ConfigInvalid(f"{source}: not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{source}: a config must be a JSON object")
    try:
        # strict mode keeps ints from becoming strings and rejects floats for strings
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        _raise(e, source)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigInvalid(f"cannot read {path}: {e}") from None
    return parse_config(text, str(path))


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 of the canonical JSON form (sorted keys, defaults filled, out_dir dropped)."""
    data = cfg.model_dump(mode="json", exclude={"out_dir"})
    return hashlib.sha256(json.dumps(data, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
