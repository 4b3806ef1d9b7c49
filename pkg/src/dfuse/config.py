"""JSON run configuration: schema, defaults, validation, scenario assembly."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema

from .errors import ConfigurationError
from .fusion import RULES, TABLE_RULES, ParameterGrid
from .model import GRID_LAYOUTS, Box, Exponential, PowerLaw, build_grid_network, snr_db_to_power
from .sim import SAMPLING_METHODS, Scenario

AAF_KINDS = ("power_law", "exponential")
LAYOUTS = GRID_LAYOUTS
INFORMATIVE_PRIOR = ((0.35, 0.35), (0.65, 0.65))

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_box = {
    "type": "object",
    "additionalProperties": False,
    "required": ["lo", "hi"],
    "properties": {"lo": _vec, "hi": _vec},
}
_aaf = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"kind": {"enum": list(AAF_KINDS)}, "eta": _num, "alpha": _num},
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "trials": {"type": "integer"},
        "sampling": {"enum": list(SAMPLING_METHODS)},
        "sensors": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer"},
                "noise_var": _num,
                "local_pfa": _num,
                "bep": _num,
                "layout": {"enum": list(LAYOUTS)},
            },
        },
        "region": _box,
        "prior": _box,
        "aaf": _aaf,
        "target": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"snr_db": _num, "power": _num},
            "not": {"required": ["snr_db", "power"]},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_x": {"type": "integer"}, "n_sigma": {"type": "integer"}, "rho_s": _num},
        },
        "rules": {"type": "array", "items": {"enum": list(RULES)}, "minItems": 1, "uniqueItems": True},
        "roc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"pfa_targets": {"type": "array", "items": _num, "minItems": 1}},
        },
        "pdfield": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "resolution": {"type": "integer"},
                "target_position": _vec,
                "power": _num,
            },
        },
        "table": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["uninformative", "informative"]},
                "pfa_target": _num,
                "variants": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["aaf", "bep"],
                        "properties": {"aaf": {"enum": list(AAF_KINDS)}, "bep": _num, "label": {"type": "string"}},
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class SensorsConfig:
    count: int = 64
    noise_var: float = 1.0
    local_pfa: float = 0.05
    bep: float = 0.0
    layout: str = "cell_centers"


@dataclass(frozen=True)
class AafConfig:
    kind: str = "power_law"
    eta: float = 0.2
    alpha: float = 4.0

    def build(self):
        return PowerLaw(self.eta, self.alpha) if self.kind == "power_law" else Exponential(self.eta)


@dataclass(frozen=True)
class GridConfig:
    n_x: int = 100
    n_sigma: int = 10
    rho_s: float = 0.1


@dataclass(frozen=True)
class VariantConfig:
    aaf: str
    bep: float
    label: str = ""

    def __post_init__(self):
        if not self.label:
            short = "pow" if self.aaf == "power_law" else "exp"
            object.__setattr__(self, "label", f"{short}_pe{self.bep:g}")


DEFAULT_VARIANTS = (
    VariantConfig("power_law", 0.0),
    VariantConfig("exponential", 0.0),
    VariantConfig("power_law", 0.1),
    VariantConfig("exponential", 0.1),
)


@dataclass(frozen=True)
class TableConfig:
    preset: str = "uninformative"
    pfa_target: float = 0.01
    variants: tuple = DEFAULT_VARIANTS


@dataclass(frozen=True)
class PdFieldConfig:
    resolution: int = 101
    target_position: tuple = (0.1, 0.5)
    power: float | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    trials: int = 100_000
    sampling: str = "bernoulli"
    sensors: SensorsConfig = field(default_factory=SensorsConfig)
    region: tuple = ((0.0, 0.0), (1.0, 1.0))
    prior: tuple | None = None
    aaf: AafConfig = field(default_factory=AafConfig)
    target_power: float = 10.0
    grid: GridConfig = field(default_factory=GridConfig)
    rules: tuple = TABLE_RULES
    pfa_targets: tuple = (0.01, 0.1)
    pdfield: PdFieldConfig = field(default_factory=PdFieldConfig)
    table: TableConfig = field(default_factory=TableConfig)

    @property
    def prior_box(self) -> Box:
        return Box(*(self.prior if self.prior is not None else self.region))

    @property
    def region_box(self) -> Box:
        return Box(*self.region)

    def to_dict(self) -> dict[str, Any]:
        """Serialized form accepted by :func:`config_from_dict`."""
        out = {
            "seed": self.seed,
            "trials": self.trials,
            "sampling": self.sampling,
            "sensors": asdict(self.sensors),
            "region": {"lo": list(self.region[0]), "hi": list(self.region[1])},
            "aaf": asdict(self.aaf),
            "target": {"power": self.target_power},
            "grid": asdict(self.grid),
            "rules": list(self.rules),
            "roc": {"pfa_targets": list(self.pfa_targets)},
            "pdfield": {
                "resolution": self.pdfield.resolution,
                "target_position": list(self.pdfield.target_position),
            },
            "table": {
                "preset": self.table.preset,
                "pfa_target": self.table.pfa_target,
                "variants": [asdict(v) for v in self.table.variants],
            },
        }
        if self.prior is not None:
            out["prior"] = {"lo": list(self.prior[0]), "hi": list(self.prior[1])}
        if self.pdfield.power is not None:
            out["pdfield"]["power"] = self.pdfield.power
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _fail(msg: str):
    raise ConfigurationError(msg)


def _check_prob(name: str, value: float, lo_open=True, hi: float = 1.0, hi_open=True):
    ok_lo = value > 0 if lo_open else value >= 0
    ok_hi = value < hi if hi_open else value <= hi
    if not (math.isfinite(value) and ok_lo and ok_hi):
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        _fail(f"{name} must lie in {lb}0, {hi:g}{rb}, got {value!r}")


def _box_tuple(d: dict, name: str) -> tuple:
    lo, hi = [float(x) for x in d["lo"]], [float(x) for x in d["hi"]]
    if len(lo) != len(hi):
        _fail(f"{name}.lo and {name}.hi must have the same length")
    if any(h < l for l, h in zip(lo, hi)):
        _fail(f"{name} is empty: every hi must be >= lo")
    return tuple(lo), tuple(hi)


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    """Validate ``data`` against the schema and fill defaults."""
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        _fail(f"config error at {where}: {exc.message}")

    base = RunConfig()
    s = {**asdict(base.sensors), **data.get("sensors", {})}
    count = s["count"]
    if count < 1 or math.isqrt(count) ** 2 != count:
        _fail(f"sensors.count must be a perfect square, got {count}")
    _check_prob("sensors.local_pfa", s["local_pfa"])
    _check_prob("sensors.bep", s["bep"], lo_open=False, hi=0.5, hi_open=False)
    if not s["noise_var"] > 0:
        _fail(f"sensors.noise_var must be > 0, got {s['noise_var']!r}")
    sensors = SensorsConfig(int(count), float(s["noise_var"]), float(s["local_pfa"]), float(s["bep"]), s["layout"])

    region = _box_tuple(data["region"], "region") if "region" in data else base.region
    prior = _box_tuple(data["prior"], "prior") if "prior" in data else None
    if prior is not None and not Box(*region).contains_box(Box(*prior)):
        _fail("prior must lie inside region")

    a = {**asdict(base.aaf), **data.get("aaf", {})}
    if not (a["eta"] > 0 and a["alpha"] > 0):
        _fail("aaf.eta and aaf.alpha must be > 0")
    aaf = AafConfig(a["kind"], float(a["eta"]), float(a["alpha"]))

    target = data.get("target", {})
    if "power" in target:
        power = float(target["power"])
    else:
        power = snr_db_to_power(float(target.get("snr_db", 10.0)), sensors.noise_var)
    if not (math.isfinite(power) and power >= 0):
        _fail(f"target power must be finite and >= 0, got {power!r}")

    g = {**asdict(base.grid), **data.get("grid", {})}
    if g["n_x"] < 1 or g["n_sigma"] < 1:
        _fail("grid.n_x and grid.n_sigma must be >= 1")
    if not 0 <= g["rho_s"] < 1:
        _fail(f"grid.rho_s must lie in [0, 1), got {g['rho_s']!r}")
    grid = GridConfig(int(g["n_x"]), int(g["n_sigma"]), float(g["rho_s"]))

    trials = data.get("trials", base.trials)
    if trials < 1:
        _fail(f"trials must be >= 1, got {trials}")

    pfa_targets = tuple(float(x) for x in data.get("roc", {}).get("pfa_targets", base.pfa_targets))
    for p in pfa_targets:
        _check_prob("roc.pfa_targets[]", p)

    pf = data.get("pdfield", {})
    pdfield = PdFieldConfig(
        int(pf.get("resolution", base.pdfield.resolution)),
        tuple(float(x) for x in pf.get("target_position", base.pdfield.target_position)),
        float(pf["power"]) if "power" in pf else None,
    )
    if pdfield.resolution < 2:
        _fail("pdfield.resolution must be >= 2")
    if len(pdfield.target_position) != len(region[0]):
        _fail("pdfield.target_position must match the region dimension")

    t = data.get("table", {})
    variants = tuple(VariantConfig(v["aaf"], float(v["bep"]), v.get("label", "")) for v in t.get("variants", [])) \
        or DEFAULT_VARIANTS
    for v in variants:
        _check_prob("table.variants[].bep", v.bep, lo_open=False, hi=0.5, hi_open=False)
    if len({v.label for v in variants}) != len(variants):
        _fail("table.variants labels must be unique")
    table = TableConfig(t.get("preset", "uninformative"), float(t.get("pfa_target", 0.01)), variants)
    _check_prob("table.pfa_target", table.pfa_target)

    return RunConfig(
        seed=int(data.get("seed", base.seed)),
        trials=int(trials),
        sampling=data.get("sampling", base.sampling),
        sensors=sensors,
        region=region,
        prior=prior,
        aaf=aaf,
        target_power=power,
        grid=grid,
        rules=tuple(data.get("rules", base.rules)),
        pfa_targets=pfa_targets,
        pdfield=pdfield,
        table=table,
    )


def parse_config(path) -> RunConfig:
    """Read and validate a JSON config file. Missing files raise ``OSError``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(data)


def build_network(cfg: RunConfig, bep: float | None = None):
    s = cfg.sensors
    return build_grid_network(
        s.count, cfg.region_box, s.noise_var, s.local_pfa, s.bep if bep is None else bep, layout=s.layout
    )


def build_scenario(cfg: RunConfig, aaf_kind: str | None = None, bep: float | None = None, prior=None) -> Scenario:
    """Scenario for one run; ``aaf_kind``/``bep``/``prior`` override the config."""
    aaf_cfg = cfg.aaf if aaf_kind is None else replace(cfg.aaf, kind=aaf_kind)
    prior_box = cfg.prior_box if prior is None else prior
    grid = ParameterGrid.uniform(prior_box, cfg.grid.n_x, cfg.target_power, cfg.grid.rho_s, cfg.grid.n_sigma)
    return Scenario(
        network=build_network(cfg, bep),
        aaf=aaf_cfg.build(),
        true_power=cfg.target_power,
        prior_region=prior_box,
        grid=grid,
        rules=cfg.rules,
        trials=cfg.trials,
        seed=cfg.seed,
        sampling=cfg.sampling,
    )


def table_prior(cfg: RunConfig) -> Box:
    if cfg.table.preset == "informative":
        return Box(*INFORMATIVE_PRIOR)
    return cfg.prior_box
