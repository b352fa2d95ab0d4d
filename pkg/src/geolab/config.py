"""Run configuration: YAML in, validated dataclass out, lossless round trip."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import yaml

from .charts import CHART_BUILDERS
from .errors import ConfigError

SUBCOMMANDS = ("find", "sweep", "analyze", "verify", "export")


@dataclass
class RunConfig:
    """Everything one batch run needs; serialized verbatim into every report."""

    chart: str = "plane"
    chart_params: dict = field(default_factory=dict)
    n_nodes: int = 128
    seed: int = 0
    # penalty schedule
    penalty_r0: float = 2.0
    penalty_dr: float = 1.0
    penalty_stiffness: float = 1.0
    alpha: int = 0
    alpha_max: int | None = None        # set for continuation sweeps
    ell: float = 10.0
    k_radius: float = 0.0
    # descent
    grad_tol: float = 1e-8
    max_iter: int = 20000
    # find
    n_starts: int = 20
    winding_mix: str = "mixed"          # "contractible" | "winding" | "mixed"
    start_band: tuple = (0.0, 3.0)
    # sweep
    family: str = "auto"                # "latitudes" | "winding_band" | "concentric" | "auto"
    family_members: int = 33
    family_z_center: float = 5.0
    family_z_halfwidth: float = 1.0
    family_r_max: float = 1.5
    max_rounds: int = 6000
    argmax_grad_tol: float = 1e-3
    # analyze / verify
    loop_path: str | None = None
    m_max: int = 4
    n_samples: int = 100
    rank_threshold: float = 1e-4
    zero_band: float | None = None
    steps: int = 512

    def validate(self) -> "RunConfig":
        if self.chart not in CHART_BUILDERS:
            raise ConfigError(
                f"field 'chart': unknown chart {self.chart!r} "
                f"(available: {sorted(CHART_BUILDERS)})"
            )
        checks = [
            ("n_nodes", self.n_nodes >= 8, ">= 8"),
            ("penalty_r0", self.penalty_r0 > 0, "> 0"),
            ("penalty_dr", self.penalty_dr > 0, "> 0"),
            ("penalty_stiffness", self.penalty_stiffness > 0, "> 0"),
            ("alpha", self.alpha >= 0, ">= 0"),
            ("ell", self.ell > 0, "> 0"),
            ("k_radius", self.k_radius >= 0, ">= 0"),
            ("grad_tol", self.grad_tol > 0, "> 0"),
            ("n_starts", self.n_starts >= 1, ">= 1"),
            ("m_max", self.m_max >= 1, ">= 1"),
            ("n_samples", self.n_samples >= 1, ">= 1"),
            ("seed", self.seed >= 0, ">= 0"),
            ("winding_mix", self.winding_mix in ("contractible", "winding", "mixed"),
             "one of contractible/winding/mixed"),
        ]
        if self.alpha_max is not None:
            checks.append(("alpha_max", self.alpha_max >= self.alpha, ">= alpha"))
        for name, ok, want in checks:
            if not ok:
                raise ConfigError(f"field {name!r}: must be {want} (got {getattr(self, name)})")
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        data["start_band"] = list(self.start_band)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        if isinstance(cfg.start_band, list):
            cfg.start_band = tuple(cfg.start_band)
        return cfg.validate()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"YAML parse error in {path}{where}: {exc}")
    if data is None:
        data = {}
    return RunConfig.from_dict(data)


def dump_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
