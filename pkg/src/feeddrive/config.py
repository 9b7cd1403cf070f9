"""YAML run configuration: parsing, validation, provenance and catalog checks.

Keys carry their unit in the name (``load_inertia_kgcm2``, ``speeds_mm_per_s``),
so a value in the wrong unit shows up as an unknown key instead of a silently
rescaled number.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .controller import GAIN_NAMES, ControlGains
from .optimize.tuning import MODES
from .plant import MechanicalParams, drive_coeff_from_lead, kgcm2
from .simulation import SimConfig
from .sweep import PROTOCOLS, SIMULATION_CATALOG, MotorSpec, ProcessGrid, inertia_ratio

log = logging.getLogger(__name__)

ALGORITHM_CHOICES = ("fwa", "ga", "both")


class ConfigError(ValueError):
    """Invalid configuration document; the message names the offending key path."""


def data_path(name: str) -> Path:
    """Path of a file shipped in the package data directory."""
    return Path(str(resources.files("feeddrive") / "data" / name))


# ------------------------------------------------------------------ sections

@dataclass(frozen=True)
class MechanicalSection:
    screw_stiffness_Nm_per_rad: float
    load_inertia_kgcm2: float
    damping_Nms_per_rad: float
    drive_coeff_mm_per_rad: float

    def params(self, motor: MotorSpec) -> MechanicalParams:
        return MechanicalParams(
            screw_stiffness_K=self.screw_stiffness_Nm_per_rad,
            motor_inertia_Jm=kgcm2(motor.rotor_inertia_kgcm2),
            load_inertia_Jl=kgcm2(self.load_inertia_kgcm2),
            damping_B=self.damping_Nms_per_rad,
            drive_coeff_R=self.drive_coeff_mm_per_rad,
            max_torque_Tmax=motor.max_torque,
        )


@dataclass(frozen=True)
class OptimizerSection:
    algorithm: str = "both"
    budget: int = 3000
    seed: int = 0
    modes: tuple = MODES
    protocol: str = "shared"
    tolerance: float = 0.05
    workers: int | None = None
    bounds: tuple = ()  # ((name, lo, hi), ...) overrides

    def bounds_dict(self) -> dict:
        return {name: (lo, hi) for name, lo, hi in self.bounds}


@dataclass(frozen=True)
class RunConfig:
    mechanical: MechanicalSection
    catalog: tuple
    motor_id: str
    process: ProcessGrid
    sim: SimConfig
    gains: ControlGains | None
    optimizer: OptimizerSection
    output_dir: str
    provenance: tuple = field(default=(), compare=False, repr=False)

    @property
    def motor(self) -> MotorSpec:
        for m in self.catalog:
            if m.id == self.motor_id:
                return m
        raise ConfigError(f"motor: id {self.motor_id!r} not in catalog")

    def params(self, motor: MotorSpec | None = None) -> MechanicalParams:
        return self.mechanical.params(motor or self.motor)

    def template(self) -> MechanicalParams:
        return self.params(self.catalog[0])

    def to_dict(self) -> dict:
        return serialize(self)

    def digest(self) -> str:
        """sha256 of the canonical serialized form."""
        text = yaml.safe_dump(serialize(self), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


# -------------------------------------------------------------- validation

def _show(value) -> str:
    if isinstance(value, float):
        return format(value, ".9g")
    return repr(value)


class _Reader:
    """Walks one mapping, records provenance and rejects leftovers."""

    def __init__(self, data, path: str, log_lines: list):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
        self.data = dict(data)
        self.path = path
        self.log = log_lines

    def key(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def take(self, name: str, default=dataclasses.MISSING, kind=None, show=_show):
        if name in self.data:
            value = self.data.pop(name)
            source = "config"
        elif default is dataclasses.MISSING:
            raise ConfigError(f"{self.key(name)}: required field is missing")
        else:
            value = default
            source = "default"
        if kind is not None and value is not None:
            value = _coerce(value, kind, self.key(name))
        self.log.append(f"{self.key(name)} = {show(value)} ({source})")
        return value

    def has(self, name: str) -> bool:
        return name in self.data

    def sub(self, name: str, required: bool = False) -> "_Reader":
        if required and name not in self.data:
            raise ConfigError(f"{self.key(name)}: required section is missing")
        return _Reader(self.data.pop(name, None), self.key(name), self.log)

    def finish(self):
        if self.data:
            unknown = sorted(self.data)
            raise ConfigError(f"{self.key(unknown[0])}: unknown key"
                              + (f" (also: {', '.join(unknown[1:])})" if len(unknown) > 1 else ""))


def _coerce(value, kind, path):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{path}: must be finite")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, (str, int)) or isinstance(value, bool):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return str(value)
    if kind is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return list(value)
    raise TypeError(kind)


def _positive(value, path):
    if not value > 0:
        raise ConfigError(f"{path}: must be positive, got {value!r}")
    return value


def _parse_motor(item, path, log_lines) -> MotorSpec:
    r = _Reader(item, path, log_lines)
    motor_id = r.take("id", kind=str)
    model = r.take("model", "", kind=str)
    torque = _positive(r.take("max_torque_Nm", kind=float), f"{path}.max_torque_Nm")
    inertia = _positive(r.take("rotor_inertia_kgcm2", kind=float), f"{path}.rotor_inertia_kgcm2")
    power = r.take("rated_power_kW", None, kind=float)
    if power is not None:
        _positive(power, f"{path}.rated_power_kW")
    spec = MotorSpec(motor_id, model, torque, inertia, power,
                     r.take("declared_ratio", None, kind=float),
                     r.take("declared_capacity", None, kind=float))
    r.finish()
    return spec


def _parse_catalog(items, path, log_lines) -> tuple:
    items = _coerce(items, list, path)
    if not items:
        raise ConfigError(f"{path}: catalog is empty")
    motors = tuple(_parse_motor(item, f"{path}[{i}]", log_lines) for i, item in enumerate(items))
    ids = [m.id for m in motors]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{path}: duplicate motor ids")
    return motors


def _load_catalog_file(ref: str, base_dir: Path | None, path: str, log_lines) -> tuple:
    candidates = [Path(ref)] if Path(ref).is_absolute() else []
    if base_dir is not None and not Path(ref).is_absolute():
        candidates.append(base_dir / ref)
    candidates.append(data_path(ref))
    for p in candidates:
        if p.is_file():
            doc = yaml.safe_load(p.read_text())
            if isinstance(doc, dict):
                r = _Reader(doc, path, log_lines)
                items = r.take("motors", kind=list)
                r.finish()
            else:
                items = doc
            return _parse_catalog(items, f"{path}<{p.name}>", log_lines)
    raise ConfigError(f"{path}: file {ref!r} not found")


def _builtin_catalog_doc() -> list:
    return [_motor_doc(m) for m in SIMULATION_CATALOG]


def parse_config(document, base_dir=None) -> RunConfig:
    """Validate a configuration mapping or YAML text into a ``RunConfig``.

    ``base_dir`` resolves relative ``catalog_file`` references. Every value
    taken from a default is logged and kept in ``RunConfig.provenance``.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise ConfigError(f"<root>: malformed document: {exc}") from None
    base_dir = Path(base_dir) if base_dir is not None else None
    lines: list = []
    root = _Reader(document, "", lines)

    m = root.sub("mechanical", required=True)
    k = _positive(m.take("screw_stiffness_Nm_per_rad", kind=float), "mechanical.screw_stiffness_Nm_per_rad")
    jl = _positive(m.take("load_inertia_kgcm2", kind=float), "mechanical.load_inertia_kgcm2")
    b = m.take("damping_Nms_per_rad", kind=float)
    if b < 0:
        raise ConfigError(f"mechanical.damping_Nms_per_rad: must be >= 0, got {b!r}")
    if m.has("screw_lead_mm") and m.has("drive_coeff_mm_per_rad"):
        raise ConfigError("mechanical.screw_lead_mm: give either screw_lead_mm or drive_coeff_mm_per_rad")
    if m.has("screw_lead_mm"):
        lead = _positive(m.take("screw_lead_mm", kind=float), "mechanical.screw_lead_mm")
        r_coeff = drive_coeff_from_lead(lead)
        lines.append(f"mechanical.drive_coeff_mm_per_rad = {_show(r_coeff)} (lead / 2 pi)")
    else:
        r_coeff = _positive(m.take("drive_coeff_mm_per_rad", kind=float), "mechanical.drive_coeff_mm_per_rad")
    m.finish()
    mech = MechanicalSection(k, jl, b, r_coeff)

    if root.has("catalog") and root.has("catalog_file"):
        raise ConfigError("catalog_file: give either catalog or catalog_file")
    if root.has("catalog_file"):
        ref = root.take("catalog_file", kind=str)
        catalog = _load_catalog_file(ref, base_dir, "catalog_file", lines)
    else:
        source = "config" if root.has("catalog") else "default"
        raw = root.take("catalog", _builtin_catalog_doc(), kind=list, show=lambda v: f"{len(v)} motors")
        catalog = _parse_catalog(raw, "catalog", lines if source == "default" else [])
    motor_id = root.take("motor", catalog[0].id, kind=str)
    if motor_id not in {mm.id for mm in catalog}:
        raise ConfigError(f"motor: id {motor_id!r} not in catalog")

    p = root.sub("process")
    try:
        process = ProcessGrid(
            speeds=tuple(p.take("speeds_mm_per_s", [100.0, 200.0, 400.0], kind=list)),
            accelerations=tuple(p.take("accelerations_m_per_s2", [1.0, 2.0, 5.0], kind=list)),
            stroke=p.take("stroke_mm", 200.0, kind=float),
            cycles=p.take("cycles", 1, kind=int),
            dwell=p.take("dwell_s", 0.2, kind=float),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"process: {exc}") from None
    p.finish()

    s = root.sub("simulation")
    try:
        sim = SimConfig(
            dt=s.take("dt_s", 1e-4, kind=float),
            settle_tail=s.take("settle_tail_s", 0.1, kind=float),
            encoder_counts_per_rev=s.take("encoder_counts_per_rev", 0, kind=int),
            load_torque=s.take("load_torque_Nm", 0.0, kind=float),
            velocity_feedback=s.take("velocity_feedback", "motor", kind=str),
        )
    except ValueError as exc:
        raise ConfigError(f"simulation: {exc}") from None
    s.finish()

    gains = None
    if root.has("gains"):
        g = root.sub("gains")
        values = [g.take(name, kind=float) for name in GAIN_NAMES]
        g.finish()
        try:
            gains = ControlGains(*values)
        except ValueError as exc:
            raise ConfigError(f"gains: {exc}") from None

    o = root.sub("optimizer")
    algorithm = o.take("algorithm", "both", kind=str)
    if algorithm not in ALGORITHM_CHOICES:
        raise ConfigError(f"optimizer.algorithm: must be one of {ALGORITHM_CHOICES}")
    budget = o.take("budget", 3000, kind=int)
    if budget < 80:
        raise ConfigError("optimizer.budget: must be >= 80 (initial GA population)")
    seed = o.take("seed", 0, kind=int)
    modes = tuple(o.take("modes", list(MODES), kind=list))
    if not modes or any(mm not in MODES for mm in modes) or len(set(modes)) != len(modes):
        raise ConfigError(f"optimizer.modes: must be distinct values from {MODES}")
    protocol = o.take("protocol", "shared", kind=str)
    if protocol not in PROTOCOLS:
        raise ConfigError(f"optimizer.protocol: must be one of {PROTOCOLS}")
    tolerance = _positive(o.take("tolerance", 0.05, kind=float), "optimizer.tolerance")
    workers = o.take("workers", None, kind=int)
    if workers is not None and workers < 1:
        raise ConfigError("optimizer.workers: must be >= 1")
    bounds = []
    bsub = o.sub("bounds")
    for name in GAIN_NAMES:
        if bsub.has(name):
            pair = bsub.take(name, kind=list)
            key = bsub.key(name)
            if len(pair) != 2:
                raise ConfigError(f"{key}: expected [lower, upper]")
            lo, hi = (_coerce(v, float, key) for v in pair)
            if not lo < hi:
                raise ConfigError(f"{key}: lower bound must be below upper bound")
            bounds.append((name, lo, hi))
    bsub.finish()
    o.finish()
    optimizer = OptimizerSection(algorithm, budget, seed, modes, protocol, tolerance, workers, tuple(bounds))

    output_dir = root.take("output_dir", "out", kind=str)
    root.finish()

    for line in lines:
        log.info("config: %s", line)
    return RunConfig(mech, catalog, motor_id, process, sim, gains, optimizer, output_dir, tuple(lines))


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} not found")
    return parse_config(path.read_text(), base_dir=path.parent)


def default_config() -> RunConfig:
    return load_config(data_path("default.yaml"))


# ----------------------------------------------------------- serialization

def _motor_doc(m: MotorSpec) -> dict:
    d = {"id": m.id, "model": m.model, "max_torque_Nm": m.max_torque,
         "rotor_inertia_kgcm2": m.rotor_inertia_kgcm2}
    if m.rated_power_kw is not None:
        d["rated_power_kW"] = m.rated_power_kw
    if m.declared_ratio is not None:
        d["declared_ratio"] = m.declared_ratio
    if m.declared_capacity is not None:
        d["declared_capacity"] = m.declared_capacity
    return d


def serialize(cfg: RunConfig) -> dict:
    """Plain mapping that ``parse_config`` turns back into an equal RunConfig."""
    doc = {
        "mechanical": {
            "screw_stiffness_Nm_per_rad": cfg.mechanical.screw_stiffness_Nm_per_rad,
            "load_inertia_kgcm2": cfg.mechanical.load_inertia_kgcm2,
            "damping_Nms_per_rad": cfg.mechanical.damping_Nms_per_rad,
            "drive_coeff_mm_per_rad": cfg.mechanical.drive_coeff_mm_per_rad,
        },
        "catalog": [_motor_doc(m) for m in cfg.catalog],
        "motor": cfg.motor_id,
        "process": {
            "speeds_mm_per_s": list(cfg.process.speeds),
            "accelerations_m_per_s2": list(cfg.process.accelerations),
            "stroke_mm": cfg.process.stroke,
            "cycles": cfg.process.cycles,
            "dwell_s": cfg.process.dwell,
        },
        "simulation": {
            "dt_s": cfg.sim.dt,
            "settle_tail_s": cfg.sim.settle_tail,
            "encoder_counts_per_rev": cfg.sim.encoder_counts_per_rev,
            "load_torque_Nm": cfg.sim.load_torque,
            "velocity_feedback": cfg.sim.velocity_feedback,
        },
        "optimizer": {
            "algorithm": cfg.optimizer.algorithm,
            "budget": cfg.optimizer.budget,
            "seed": cfg.optimizer.seed,
            "modes": list(cfg.optimizer.modes),
            "protocol": cfg.optimizer.protocol,
            "tolerance": cfg.optimizer.tolerance,
            "workers": cfg.optimizer.workers,
            "bounds": {name: [lo, hi] for name, lo, hi in cfg.optimizer.bounds},
        },
        "output_dir": cfg.output_dir,
    }
    if cfg.gains is not None:
        doc["gains"] = cfg.gains.to_dict()
    return doc


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(serialize(cfg), sort_keys=False)


# ------------------------------------------------------- catalog checking

@dataclass(frozen=True)
class CatalogCheckRow:
    motor_id: str
    ratio: float
    capacity: float
    declared_ratio: float | None
    declared_capacity: float | None
    ratio_deviation: float | None  # after rounding to the printed precision
    capacity_deviation: float | None
    raw_ratio_deviation: float | None
    raw_capacity_deviation: float | None
    ok: bool


@dataclass(frozen=True)
class CatalogReport:
    load_inertia_kgcm2: float
    threshold: float
    rows: tuple

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def flagged(self) -> list:
        return [r.motor_id for r in self.rows if not r.ok]

    def to_dict(self) -> dict:
        return {"load_inertia_kgcm2": self.load_inertia_kgcm2, "threshold": self.threshold,
                "ok": self.ok, "flagged": self.flagged,
                "rows": [dataclasses.asdict(r) for r in self.rows]}


def validate_catalog(catalog, load_inertia: float, threshold: float = 0.015,
                     ratio_decimals: int | None = 1, capacity_decimals: int | None = 2) -> CatalogReport:
    """Recompute r = Jl/Jm and T/(Jm+Jl) per motor against the declared columns.

    Declared values are printed at fixed precision (one decimal for the
    ratio, two for the capacity), so the recomputed value is rounded to that
    precision before comparing. ``None`` disables the rounding. Rows with a
    deviation above ``threshold`` are flagged; raw deviations are reported
    alongside.
    """
    if not load_inertia > 0:
        raise ValueError("load inertia must be positive")
    rows = []
    for m in catalog:
        ratio = inertia_ratio(m, load_inertia)
        capacity = m.max_torque / (m.rotor_inertia_kgcm2 + load_inertia)

        def dev(value, declared, decimals):
            if declared is None:
                return None, None
            shown = value if decimals is None else round(value, decimals)
            return abs(shown - declared), abs(value - declared)

        r_dev, r_raw = dev(ratio, m.declared_ratio, ratio_decimals)
        c_dev, c_raw = dev(capacity, m.declared_capacity, capacity_decimals)
        ok = all(d is None or d <= threshold for d in (r_dev, c_dev))
        rows.append(CatalogCheckRow(m.id, ratio, capacity, m.declared_ratio, m.declared_capacity,
                                    r_dev, c_dev, r_raw, c_raw, ok))
    return CatalogReport(load_inertia, threshold, tuple(rows))
