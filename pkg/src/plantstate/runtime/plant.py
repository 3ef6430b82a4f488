"""Linear synthetic plant with per-setting actuation lag.

Sensor dynamics per tick:

    s(t+1) = A s(t) + B h_eff(t) + c + eps,   eps ~ Normal(0, sigma)

where A is diagonal with entries in [0, 1) (bounded dynamics), B maps
settings to sensors and h_eff applies operator-set values only after the
setting's actuation lag. The generator is seeded, so a (seed, spec, action
script) triple fully determines the trajectory. This is deliberately the
simplest dynamics that make the prescriptive loop meaningful; it claims
nothing about real evaporator physics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from plantstate.core import Interval


@dataclass(frozen=True)
class PlantSpec:
    """Configuration of the synthetic plant."""

    sensor_ids: tuple[str, ...]
    setting_ids: tuple[str, ...]
    decay: Mapping[str, float]            # diagonal A, per sensor, in [0, 1)
    response: Mapping[str, Mapping[str, float]]  # sensor -> setting -> gain
    offsets: Mapping[str, float]          # c, per sensor
    noise_sigma: Mapping[str, float]      # per sensor
    lag_ticks: Mapping[str, int]          # per setting
    initial_sensors: Mapping[str, float]
    initial_settings: Mapping[str, float]
    quality_sensor_id: Optional[str] = None
    quality_band: Optional[Interval] = None

    def __post_init__(self) -> None:
        for sid in self.sensor_ids:
            a = self.decay.get(sid, 0.0)
            if not 0.0 <= a < 1.0:
                raise ValueError(f"decay for {sid} must be in [0, 1)")
        for hid in self.setting_ids:
            if self.lag_ticks.get(hid, 0) < 0:
                raise ValueError(f"lag for {hid} must be >= 0")
        if self.quality_sensor_id is not None \
                and self.quality_sensor_id not in self.sensor_ids:
            raise ValueError("quality sensor not among sensors")

    def to_dict(self) -> dict:
        return {
            "sensors": list(self.sensor_ids),
            "settings": list(self.setting_ids),
            "decay": dict(self.decay),
            "response": {k: dict(v) for k, v in self.response.items()},
            "offsets": dict(self.offsets),
            "noiseSigma": dict(self.noise_sigma),
            "lagTicks": dict(self.lag_ticks),
            "initialSensors": dict(self.initial_sensors),
            "initialSettings": dict(self.initial_settings),
            "qualitySensorId": self.quality_sensor_id,
            "qualityBand": None if self.quality_band is None
            else self.quality_band.to_dict(),
        }

    @staticmethod
    def from_dict(d: Mapping) -> "PlantSpec":
        band = d.get("qualityBand")
        return PlantSpec(
            sensor_ids=tuple(d["sensors"]),
            setting_ids=tuple(d["settings"]),
            decay=dict(d.get("decay", {})),
            response={k: dict(v) for k, v in d.get("response", {}).items()},
            offsets=dict(d.get("offsets", {})),
            noise_sigma=dict(d.get("noiseSigma", {})),
            lag_ticks={k: int(v) for k, v in d.get("lagTicks", {}).items()},
            initial_sensors=dict(d["initialSensors"]),
            initial_settings=dict(d["initialSettings"]),
            quality_sensor_id=d.get("qualitySensorId"),
            quality_band=None if band is None else Interval.from_dict(band),
        )

    @staticmethod
    def load(path) -> "PlantSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return PlantSpec.from_dict(json.load(fh))


def synth_step(spec: PlantSpec, sensors: Mapping[str, float],
               effective_settings: Mapping[str, float],
               rng: np.random.Generator) -> dict[str, float]:
    """One dynamics step; consumes exactly one normal draw per sensor."""
    sigma = np.array([spec.noise_sigma.get(sid, 0.0) for sid in spec.sensor_ids])
    eps = rng.normal(0.0, 1.0, size=len(spec.sensor_ids)) * sigma
    out: dict[str, float] = {}
    for i, sid in enumerate(spec.sensor_ids):
        value = spec.decay.get(sid, 0.0) * sensors[sid] \
            + spec.offsets.get(sid, 0.0) + eps[i]
        gains = spec.response.get(sid, {})
        for hid, gain in gains.items():
            value += gain * effective_settings[hid]
        out[sid] = float(value)
    return out


class SyntheticPlant:
    """Stateful wrapper around ``synth_step`` with actuation lag."""

    def __init__(self, spec: PlantSpec, seed: int = 0):
        self.spec = spec
        self.rng = np.random.default_rng(seed)
        self.sensors = dict(spec.initial_sensors)
        self.effective = dict(spec.initial_settings)
        self._pending: list[tuple[int, str, float]] = []

    def schedule(self, tick_effective: int, setting_id: str, value: float) -> None:
        if setting_id not in self.spec.setting_ids:
            raise ValueError(f"unknown setting: {setting_id}")
        self._pending.append((tick_effective, setting_id, value))

    def pending_after(self, tick: int) -> dict[str, float]:
        """Scheduled values not yet in effective dynamics at ``tick``."""
        return {sid: value for eff, sid, value in self._pending if eff > tick}

    def step(self, tick: int) -> dict[str, float]:
        """Advance to ``tick``: apply due settings, then step the dynamics."""
        due = [(e, s, v) for e, s, v in self._pending if e <= tick]
        self._pending = [(e, s, v) for e, s, v in self._pending if e > tick]
        for _, sid, value in sorted(due):
            self.effective[sid] = value
        self.sensors = synth_step(self.spec, self.sensors, self.effective,
                                  self.rng)
        return dict(self.sensors)
