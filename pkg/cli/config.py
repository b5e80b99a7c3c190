"""Run configuration: one JSON document, overridable from the command line."""

import json
import logging
from pathlib import Path
from typing import Dict, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, field_validator

from common.exceptions import ConfigError
from forms.models import ModelParams
from mesh.io import read_mesh
from mesh.services import tag_boundary
from mms.cases import build_case_mesh, get_case, manufactured_case, with_params
from poro_hdg import settings
from spaces.choices import Variant
from timeloop.choices import Scheme

logger = logging.getLogger(__name__)

PARAMETER_KEYS = ("E", "nu", "c0", "alpha", "kappa")


class ManufacturedSolution(BaseModel):
    """Inline manufactured solution: sympy expressions in ``x``, ``y`` and ``t``."""

    model_config = ConfigDict(extra="forbid")

    displacement: Tuple[str, str]
    pressure: str
    static: bool = False
    E: float = 1.0e4
    nu: float = 0.2
    c0: float = 0.1
    alpha: float = 0.1
    kappa: float = 1.0e-2


class RunConfig(BaseModel):
    """Everything needed to reproduce one run.

    Unset optional fields fall back to the case defaults. ``gate_rates`` maps
    a field (u, pT, z, p) to the minimum finest-level rate.
    """

    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = settings.CONFIG_SCHEMA_VERSION
    case: str = "quasistatic"
    mms: Optional[ManufacturedSolution] = None
    variant: Optional[Variant] = None
    k: Optional[int] = Field(default=None, ge=1)
    nx: Optional[int] = Field(default=None, ge=1)
    ny: Optional[int] = Field(default=None, ge=1)
    mesh: Optional[Path] = None
    scheme: Optional[Scheme] = None
    dt: Optional[float] = Field(default=None, gt=0.0)
    T: Optional[float] = Field(default=None, gt=0.0)
    E: Optional[float] = None
    nu: Optional[float] = None
    c0: Optional[float] = None
    alpha: Optional[float] = None
    kappa: Optional[float] = None
    beta: Optional[float] = Field(default=None, gt=0.0)
    output_dir: Path = settings.OUTPUT_DIR
    vtk: bool = True
    csv: bool = True
    checkpoints: bool = False
    checkpoint_every: int = Field(default=1, ge=1)
    restart: Optional[Path] = None
    seed: int = settings.SEED
    levels: int = Field(default=3, ge=1)
    gate_rates: Dict[str, float] = Field(default_factory=dict)
    robustness_E: Tuple[float, ...] = (1.0, 1.0e4)
    robustness_nu: Tuple[float, ...] = (0.4, 0.49999)
    robustness_level: int = Field(default=2, ge=0)
    max_ratio: float = Field(default=3.0, gt=0.0)

    @field_validator("gate_rates")
    @classmethod
    def known_fields(cls, value):
        unknown = set(value) - {"u", "pT", "z", "p"}
        if unknown:
            raise ValueError(f"unknown gate fields {sorted(unknown)}")
        return value

    def overrides(self):
        return {key: getattr(self, key) for key in PARAMETER_KEYS if getattr(self, key) is not None}

    def echo(self):
        return json.loads(self.model_dump_json())


def load_config(path=None, **overrides):
    """Read ``path`` (JSON) if given, then apply non-``None`` overrides."""

    data = {}
    if path is not None:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as error:
            raise ConfigError(f"config file {path} is not valid JSON: {error}") from error
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    data.update({key: value for key, value in overrides.items() if value is not None})
    try:
        config = RunConfig(**data)
    except PydanticValidationError as error:
        raise ConfigError(f"invalid configuration:\n{error}") from error
    logger.debug("loaded config %s", config.echo())
    return config


def parse_rates(text):
    """``"1.8,0.9,1.8,0.9"`` -> minimum rates for (u, pT, z, p)."""

    if not text:
        return None
    try:
        values = [float(item) for item in text.split(",")]
    except ValueError:
        raise ConfigError(f"gate rates must be numbers, got {text!r}") from None
    if len(values) != 4:
        raise ConfigError(f"expected four gate rates (u, pT, z, p), got {len(values)}")
    return dict(zip(("u", "pT", "z", "p"), values))


def build_case(config):
    """Benchmark case with the config's degree, variant and parameter overrides applied."""

    variant = config.variant.value if config.variant else None
    changes = config.overrides()
    if config.mms is not None:
        solution = config.mms
        params = ModelParams(
            E=solution.E,
            nu=solution.nu,
            c0=solution.c0,
            alpha=solution.alpha,
            kappa=solution.kappa,
            degree=config.k or 1,
        )
        case = manufactured_case(
            solution.displacement, solution.pressure, params, static=solution.static, variant=variant or "hdg"
        )
    else:
        options = {}
        if config.k is not None:
            options["degree"] = config.k
        if variant is not None:
            options["variant"] = variant
        if config.case in ("static", "static_mms"):
            # lambda enters the static displacement, so E and nu go to the factory
            options.update({key: value for key, value in changes.items() if key in ("E", "nu")})
            changes = {key: value for key, value in changes.items() if key not in options}
        case = get_case(config.case, **options)

    if config.beta is not None:
        changes["beta"] = config.beta
    if changes:
        case = with_params(case, case.params.replace(**changes))
    return case


def build_mesh(config, case, level=0):
    """Mesh from ``config.mesh`` (tagged with the case rules if it has no tags) or the case's grid."""

    if config.mesh is None:
        return build_case_mesh(case, config.nx, config.ny, level)
    if not Path(config.mesh).is_file():
        raise ConfigError(f"mesh file {config.mesh} does not exist")
    mesh = read_mesh(config.mesh)
    if not mesh.boundary_tags:
        mesh = tag_boundary(mesh, case.displacement_rule, case.flow_rule)
    return mesh
