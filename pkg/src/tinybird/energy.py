"""Parametric current and battery-lifetime model.

All mode currents ship as a versioned key-value data file (profiles.txt)
rather than hard-coded constants, so re-measured hardware can recalibrate
without code changes.  The streaming comparison baseline is a calibrated
parameter (see the data file's provenance notes); the microphone and
classifier terms are explicit so both the relative lifetime claim and the
absolute system-power comparison reproduce.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources

from .errors import ConfigError

PROFILE_ENV = "TINYBIRD_PROFILE"

DEFAULT_MIC_MW = 5.25
DEFAULT_CLASSIFIER_MW = 0.48
DEFAULT_RAIL_V = 3.0


@dataclass(frozen=True)
class CurrentProfile:
    """Current/power terms for one operating mode at the 3 V rail."""

    name: str
    baseline_ma: float           # non-BLE, non-codec system draw
    ble_ma: float                # average radio current while transmitting
    codec_overhead_ma: float = 0.0
    mic_mw: float = 0.0          # constant microphone power (0 = folded out)
    classifier_mw: float = 0.0
    bitrate_kbps: float = 0.0

    def __post_init__(self):
        for name in ("baseline_ma", "ble_ma", "codec_overhead_ma",
                     "mic_mw", "classifier_mw"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{self.name}: {name} must be >= 0")


@dataclass(frozen=True)
class BatteryModel:
    capacity_mah: float
    cell_voltage: float = 1.45
    rail_voltage: float = DEFAULT_RAIL_V
    converter_efficiency: float = 0.90

    def __post_init__(self):
        if not 0 < self.converter_efficiency <= 1:
            raise ConfigError("converter efficiency must be in (0, 1]")
        if self.capacity_mah <= 0 or self.cell_voltage <= 0 or self.rail_voltage <= 0:
            raise ConfigError("battery capacity and voltages must be > 0")


def average_current(profile: CurrentProfile, voicing_fraction: float,
                    rail_voltage: float = DEFAULT_RAIL_V) -> float:
    """Average rail current in mA for a given voicing duty cycle.

    baseline + voicing * (BLE + codec overhead) + constant mW terms / rail.
    Transmission happens only while blocks are voiced, so the radio and
    codec terms scale with the duty cycle.
    """
    if not 0.0 <= voicing_fraction <= 1.0:
        raise ConfigError("voicing_fraction must be in [0, 1]")
    constant_ma = (profile.mic_mw + profile.classifier_mw) / rail_voltage
    return (profile.baseline_ma
            + voicing_fraction * (profile.ble_ma + profile.codec_overhead_ma)
            + constant_ma)


def battery_current_ma(battery: BatteryModel, rail_current_ma: float) -> float:
    """Battery-side draw for a given rail current (power conservation
    through the boost converter)."""
    return rail_current_ma * battery.rail_voltage / (
        battery.cell_voltage * battery.converter_efficiency)


def lifetime_hours(battery: BatteryModel, avg_current_ma_at_rail: float) -> float:
    if avg_current_ma_at_rail <= 0:
        raise ConfigError("average current must be > 0")
    return battery.capacity_mah / battery_current_ma(battery, avg_current_ma_at_rail)


def lifetime_ratio(battery: BatteryModel, profile_a: CurrentProfile,
                   profile_b: CurrentProfile, voicing_fraction: float = 1.0,
                   rail_voltage: float = DEFAULT_RAIL_V) -> float:
    """lifetime(a) / lifetime(b); the battery model cancels, leaving the
    inverse current ratio."""
    return (average_current(profile_b, voicing_fraction, rail_voltage)
            / average_current(profile_a, voicing_fraction, rail_voltage))


def classifier_mode_power(profile: CurrentProfile) -> float:
    """mW consumed in on-device classification mode: microphone plus the
    network's computational overhead."""
    return profile.mic_mw + profile.classifier_mw


def streaming_system_power(profile: CurrentProfile, voicing_fraction: float,
                           rail_voltage: float = DEFAULT_RAIL_V,
                           mic_mw: float = DEFAULT_MIC_MW) -> float:
    """Absolute system power in mW while streaming, microphone included.

    The shipped streaming profiles keep mic_mw = 0 so the calibrated
    baseline reproduces the relative lifetime comparison; for absolute
    power the always-on microphone must be added back, which this helper
    does (unless the profile already carries one).
    """
    mic = profile.mic_mw if profile.mic_mw > 0 else mic_mw
    rail_ma = (average_current(profile, voicing_fraction, rail_voltage)
               - profile.mic_mw / rail_voltage)
    return mic + rail_voltage * rail_ma


# ----------------------------------------------------------- data files

def parse_kv(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def _read_data(filename: str, path) -> str:
    if path is not None:
        with open(path) as fh:
            return fh.read()
    return resources.files("tinybird.data").joinpath(filename).read_text()


def load_profiles(path=None) -> dict[str, CurrentProfile]:
    """Parse the mode table; path defaults to $TINYBIRD_PROFILE or the
    packaged file.  Returns streaming modes plus a 'classifier' profile."""
    if path is None:
        path = os.environ.get(PROFILE_ENV) or None
    text = _read_data("profiles.txt", path)
    values = parse_kv(text)
    baseline = float(values.pop("baseline_ma"))
    mic_mw = float(values.pop("mic_mw", DEFAULT_MIC_MW))
    classifier_mw = float(values.pop("classifier_mw", DEFAULT_CLASSIFIER_MW))
    values.pop("version", None)
    values.pop("rail_voltage", None)

    modes: dict[str, dict[str, float]] = {}
    for key, value in values.items():
        if "." not in key:
            raise ConfigError(f"unexpected key {key!r} in profile file")
        mode, field_name = key.split(".", 1)
        modes.setdefault(mode, {})[field_name] = float(value)

    profiles = {}
    for mode, fields in modes.items():
        profiles[mode] = CurrentProfile(
            name=mode,
            baseline_ma=baseline,
            ble_ma=fields["ble_ma"],
            codec_overhead_ma=fields.get("codec_overhead_ma", 0.0),
            bitrate_kbps=fields.get("bitrate_kbps", 0.0),
        )
    profiles["classifier"] = CurrentProfile(
        name="classifier", baseline_ma=baseline, ble_ma=0.0,
        mic_mw=mic_mw, classifier_mw=classifier_mw)
    return profiles


def load_battery(path=None) -> BatteryModel:
    text = _read_data("battery.txt", path)
    values = parse_kv(text)
    return BatteryModel(
        capacity_mah=float(values["capacity_mah"]),
        cell_voltage=float(values.get("cell_voltage", 1.45)),
        rail_voltage=float(values.get("rail_voltage", DEFAULT_RAIL_V)),
        converter_efficiency=float(values.get("converter_efficiency", 0.90)),
    )
