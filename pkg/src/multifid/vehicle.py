"""Vehicle state, physical parameters and the built-in vehicle catalog."""
import dataclasses
import json
import math
from dataclasses import dataclass

G = 9.81


class CatalogError(KeyError):
    pass


@dataclass(frozen=True)
class VehicleState:
    """Executed vehicle state. ``(x, y)`` is the rear-axle reference point."""

    x: float
    y: float
    heading: float
    v: float
    a: float = 0.0
    steer: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"VehicleState.{f.name} is not finite")
        if self.v < 0.0:
            raise ValueError("VehicleState.v must be >= 0")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**{f.name: float(data[f.name]) for f in dataclasses.fields(cls)})


@dataclass(frozen=True)
class VehicleParams:
    model_id: str
    wheelbase: float
    length: float
    width: float
    mass: float
    delta_max: float
    steer_rate_max: float
    a_accel_max: float
    a_brake_max: float
    v_max: float
    tau_steer: float
    tau_accel: float
    mu: float

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if f.name == "model_id":
                continue
            if not getattr(self, f.name) > 0.0:
                raise ValueError(f"VehicleParams.{f.name} must be positive")
        if self.delta_max >= math.pi / 2:
            raise ValueError("VehicleParams.delta_max must be below pi/2")

    @property
    def kappa_max(self):
        return math.tan(self.delta_max) / self.wheelbase

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown VehicleParams fields: {sorted(unknown)}")
        return cls(**data)


# Archetypes for a touring car, an off-road vehicle and a small city car.
# Touring is the model the planner assumes.
CATALOG = {
    "touring": VehicleParams(
        model_id="touring", wheelbase=2.7, length=4.5, width=1.8, mass=1500.0,
        delta_max=0.61, steer_rate_max=6.98, a_accel_max=8.0, a_brake_max=9.5,
        v_max=50.8, tau_steer=0.08, tau_accel=0.25, mu=1.0,
    ),
    "offroad": VehicleParams(
        model_id="offroad", wheelbase=2.9, length=4.3, width=1.9, mass=1900.0,
        delta_max=0.55, steer_rate_max=5.0, a_accel_max=5.0, a_brake_max=8.0,
        v_max=40.0, tau_steer=0.15, tau_accel=0.40, mu=0.9,
    ),
    "citycar": VehicleParams(
        model_id="citycar", wheelbase=2.0, length=3.6, width=1.6, mass=950.0,
        delta_max=0.70, steer_rate_max=4.5, a_accel_max=3.0, a_brake_max=8.0,
        v_max=35.0, tau_steer=0.20, tau_accel=0.30, mu=0.85,
    ),
}

PLANNER_ASSUMED_MODEL = "touring"


def vehicle_catalog(model_id, overrides=None):
    """Look up a catalog entry, consulting ``overrides`` (id -> params) first."""
    if overrides and model_id in overrides:
        return overrides[model_id]
    try:
        return CATALOG[model_id]
    except KeyError:
        valid = sorted(set(CATALOG) | set(overrides or {}))
        raise CatalogError(f"unknown vehicle model {model_id!r}; valid ids: {', '.join(valid)}") from None


def dump_catalog(path):
    with open(path, "w") as fh:
        json.dump({k: v.to_dict() for k, v in CATALOG.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_catalog_overrides(data):
    """Build override entries from a mapping of partial VehicleParams dicts.

    Entries for existing ids only need the fields they change.
    """
    out = {}
    for model_id, fields in data.items():
        base = CATALOG[model_id].to_dict() if model_id in CATALOG else {}
        base.update(fields)
        base["model_id"] = model_id
        out[model_id] = VehicleParams.from_dict(base)
    return out
