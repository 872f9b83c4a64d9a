"""Run configuration: flat ``key = value`` files and built-in profiles."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ParameterError
from .materials import AsrLaw, FractureParams, IsotropicElastic, MaterialTable

KELVIN = 273.15
SCENARIOS = ("meso_free", "meso_loaded", "fe2_free", "fe2_loaded")

# keys given in degrees Celsius in files and profiles, stored in kelvin
_CELSIUS_KEYS = ("temperature", "reference_temperature")


@dataclass
class RunConfig:
    """Every parameter of one run. Lengths in mm, stresses in Pa, times in days."""

    scenario: str
    # specimen / RVE geometry
    width: float
    height: float
    element_size: float
    d_min: float
    d_max: float
    packing: float
    asr_site_ratio: float
    # materials
    mortar_E: float
    mortar_nu: float
    mortar_Gc: float
    mortar_ft: float
    aggregate_E: float
    aggregate_nu: float
    aggregate_Gc: float
    aggregate_ft: float
    asr_E: float
    asr_nu: float
    weibull_k: float
    weibull_lambda_factor: float
    crack_band_width: float
    # ASR kinetics
    tau_lat: float
    tau_ch: float
    U_C: float
    U_L: float
    reference_temperature: float
    eps_inf: float
    # loading and schedule
    load: float
    t_end: float
    dt: float
    temperature: float
    # seeds
    seed_geometry: int
    seed_strength: int
    seed_sites: int
    # FE2 macro layout
    macro_width: float
    macro_height: float
    macro_element_size: float
    # solver settings and tolerances
    plane: str
    sla_mode: str
    regularize: bool
    sla_max_passes: int
    closure_max_iter: int
    criterion_tol: float
    macro_tol: float
    macro_max_iter: int
    virtual_strain: float
    probe_strain: float
    record_interval: int
    n_workers: int
    output_dir: str

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ParameterError(f"unknown scenario {self.scenario!r}")
        if self.plane not in ("stress", "strain"):
            raise ParameterError(f"unknown plane assumption {self.plane!r}")
        if self.sla_mode not in ("modified", "classical"):
            raise ParameterError(f"unknown SLA mode {self.sla_mode!r}")
        if self.dt <= 0 or self.t_end < 0:
            raise ParameterError("need dt > 0 and t_end >= 0")
        if self.record_interval < 1 or self.n_workers < 1:
            raise ParameterError("record_interval and n_workers must be at least 1")
        if not 0 <= self.asr_site_ratio <= 1 or not 0 <= self.packing < 1:
            raise ParameterError("asr_site_ratio and packing must lie in [0, 1)")
        if self.temperature <= 0 or self.reference_temperature <= 0:
            raise ParameterError("temperatures must be positive in kelvin")

    @property
    def loaded(self):
        return self.scenario.endswith("_loaded")

    def material_table(self):
        return MaterialTable(
            mortar=IsotropicElastic(self.mortar_E, self.mortar_nu),
            aggregate=IsotropicElastic(self.aggregate_E, self.aggregate_nu),
            asr_product=IsotropicElastic(self.asr_E, self.asr_nu),
            mortar_fracture=FractureParams(self.mortar_Gc, self.mortar_ft, self.crack_band_width,
                                           self.weibull_k, self.weibull_lambda_factor),
            aggregate_fracture=FractureParams(self.aggregate_Gc, self.aggregate_ft,
                                              self.crack_band_width, self.weibull_k,
                                              self.weibull_lambda_factor),
        )

    def asr_law(self):
        return AsrLaw(tau_lat0=self.tau_lat, tau_ch0=self.tau_ch, U_C=self.U_C, U_L=self.U_L,
                      T0=self.reference_temperature, eps_inf=self.eps_inf)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _common():
    return {
        "d_min": 1.0, "d_max": 16.0,
        "mortar_E": 12e9, "mortar_nu": 0.3, "mortar_Gc": 60.0, "mortar_ft": 3e6,
        "aggregate_E": 59e9, "aggregate_nu": 0.3, "aggregate_Gc": 160.0, "aggregate_ft": 10e6,
        "asr_E": 11e9, "asr_nu": 0.18, "weibull_k": 5.0, "weibull_lambda_factor": 0.2,
        "tau_lat": 30.0, "tau_ch": 60.0, "U_C": 5400.0, "U_L": 9700.0,
        "reference_temperature": 38.0, "eps_inf": 0.065,
        "load": 10e6, "t_end": 450.0, "dt": 0.5, "temperature": 38.0,
        "seed_geometry": 1, "seed_strength": 2, "seed_sites": 3,
        "macro_width": 140.0, "macro_height": 280.0, "macro_element_size": 70.0,
        "plane": "stress", "sla_mode": "modified", "regularize": True,
        "sla_max_passes": 20000, "closure_max_iter": 5, "criterion_tol": 1e-9,
        "macro_tol": 1e-4, "macro_max_iter": 50, "virtual_strain": 1e-4,
        "probe_strain": 1e-4, "record_interval": 10, "n_workers": 1, "output_dir": "out",
    }


PROFILES = {
    "desk": {**_common(), "width": 35.0, "height": 35.0, "element_size": 1.0,
             "packing": 0.45, "crack_band_width": 1.0, "asr_site_ratio": 0.005},
    "paper": {**_common(), "width": 70.0, "height": 70.0, "element_size": 0.5,
              "packing": 0.7, "crack_band_width": 0.5, "asr_site_ratio": 0.001},
}


def _coerce(name, raw, kind):
    text = str(raw).strip()
    try:
        if kind is bool:
            if isinstance(raw, bool):
                return raw
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            value = float(text)
            if value != int(value):
                raise ValueError(text)
            return int(value)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ParameterError(f"invalid value {text!r} for {name}") from None


_TYPES = {"float": float, "int": int, "bool": bool, "str": str}


def build_config(values, profile=None):
    """RunConfig from raw values, filling gaps from ``profile`` when given.

    Without a profile every key must be present. Temperatures are read in
    degrees Celsius.
    """
    spec = {f.name: _TYPES[f.type] for f in fields(RunConfig)}
    unknown = sorted(set(values) - set(spec))
    if unknown:
        raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
    merged = {}
    if profile is not None:
        if profile not in PROFILES:
            raise ParameterError(f"unknown profile {profile!r}")
        merged.update(PROFILES[profile])
        merged.setdefault("scenario", "meso_free")
    merged.update(values)
    missing = sorted(set(spec) - set(merged))
    if missing:
        raise ParameterError(f"missing config keys: {', '.join(missing)}")
    kw = {name: _coerce(name, merged[name], kind) for name, kind in spec.items()}
    for key in _CELSIUS_KEYS:
        kw[key] += KELVIN
    return RunConfig(**kw)


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParameterError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in values:
            raise ParameterError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def load_config(path, profile=None, overrides=None):
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ParameterError(f"cannot read config {path}: {err}") from err
    values = parse_config_text(text)
    values.update(overrides or {})
    return build_config(values, profile)


def profile_config(profile="desk", **overrides):
    return build_config(overrides, profile)
