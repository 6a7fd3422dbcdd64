"""
RunConfig: the sectioned INI file every subcommand reads.

Keys carry their unit in the name (``dead_time_ns``, ``rate_a_cps``,
``phi_a_pi``); the accessors below convert to the SI units used by the
domain types.
"""

import configparser
import io
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from django.conf import settings

from experiments.scan import phase_grid_from_angles
from experiments.sweep import scale_factors_for_targets
from experiments.types import ScanSpec
from optics.types import DetectorModel, InterferometerConfig, PhasePlateGeometry, PhasePoint
from photonsim.types import SourceNoise, SourceStatistics
from threepath.exceptions import InvalidConfigError, TotalInternalReflectionError

from .forms import OPTIONAL_SECTIONS, SECTION_FORMS

logger = logging.getLogger(__name__)

Overrides = Mapping[tuple[str, str], str]


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(item) for item in value)
    return str(value)


def _linspace(start: float, stop: float, points: int) -> tuple[float, ...]:
    return tuple(float(v) for v in np.linspace(start, stop, points))


@dataclass(frozen=True)
class RunConfig:
    """
    Cleaned values of every section, in the units of the file.

    ``plates`` is None unless the file has a ``[plates]`` section.
    """

    run: Mapping
    interferometer: Mapping
    detector: Mapping
    source: Mapping
    measurement: Mapping
    scan: Mapping
    sweep: Mapping
    plates: Mapping | None = None

    @classmethod
    def from_sections(cls, sections: Mapping[str, Mapping[str, str]]) -> "RunConfig":
        unknown = sorted(set(sections) - set(SECTION_FORMS))
        if unknown:
            raise InvalidConfigError(f"unknown section(s): {', '.join(unknown)}")
        cleaned = {}
        for name, form in SECTION_FORMS.items():
            if name in OPTIONAL_SECTIONS and name not in sections:
                cleaned[name] = None
                continue
            cleaned[name] = form.clean_section(dict(sections.get(name, {})))
        config = cls(**cleaned)
        config.validate()
        return config

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: Overrides | None = None) -> "RunConfig":
        """
        Read ``path`` (defaults only when None) and apply ``overrides``,
        raw strings keyed by (section, key), before validation.
        """
        parser = configparser.ConfigParser(interpolation=None)
        if path is not None:
            try:
                with open(path, encoding="utf-8") as handle:
                    parser.read_file(handle)
            except OSError as e:
                raise InvalidConfigError(f"cannot read config {path}: {e.strerror}") from e
            except configparser.Error as e:
                raise InvalidConfigError(f"{path}: {e}") from e
        sections = {name: dict(parser.items(name)) for name in parser.sections()}
        for (section, key), value in (overrides or {}).items():
            sections.setdefault(section, {})[key] = value
        logger.debug("loaded config from %s with %d override(s)", path, len(overrides or {}))
        return cls.from_sections(sections)

    def validate(self) -> None:
        """Build every domain value once so bad physics fails before a run."""
        self.interferometer_config()
        self.detector_model()
        self.statistics()
        self.noise()
        self.scan_spec()
        self.sweep_phase()

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for name in SECTION_FORMS:
            values = getattr(self, name)
            if values is None:
                continue
            parser[name] = {key: _format_value(value) for key, value in values.items()}
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    @property
    def seed(self) -> int:
        return self.run["seed"]

    @property
    def threads(self) -> int:
        return self.run["threads"]

    @property
    def verbosity(self) -> int:
        return self.run["verbosity"]

    def interferometer_config(self) -> InterferometerConfig:
        values = self.interferometer
        return InterferometerConfig(
            rate_A=values["rate_a_cps"],
            rate_B=values["rate_b_cps"],
            rate_C=values["rate_c_cps"],
            phase=PhasePoint(values["phi_a_pi"] * math.pi, values["phi_c_pi"] * math.pi),
            visibility_AB=values["visibility_ab"],
            visibility_AC=values["visibility_ac"],
            visibility_BC=values["visibility_bc"],
        )

    def detector_model(self) -> DetectorModel:
        return DetectorModel(
            dead_time_tau=self.detector["dead_time_ns"] * 1e-9,
            dark_rate_R0=self.detector["dark_rate_cps"],
            efficiency=self.detector["efficiency"],
        )

    def statistics(self) -> SourceStatistics:
        if self.source["statistics"] == "regular_emitter":
            return SourceStatistics.regular_emitter(self.source["period_ns"] * 1e-9)
        return SourceStatistics.poissonian()

    def noise(self) -> SourceNoise:
        return SourceNoise(
            intensity_sigma=self.source["intensity_noise"],
            drift_per_leg=self.source["drift_per_leg"],
        )

    def plate_geometry(self) -> PhasePlateGeometry | None:
        if self.plates is None:
            return None
        return PhasePlateGeometry(
            thickness_d=self.plates["thickness_mm"] * 1e-3,
            wavelength_lambda=self.plates["wavelength_nm"] * 1e-9,
            n1=self.plates["n_air"],
            n2=self.plates["n_glass"],
            zero_angle_offset=self.plates["zero_angle_offset_pi"] * math.pi,
        )

    def scan_spec(self) -> ScanSpec:
        values = self.scan
        geometry = self.plate_geometry()
        if geometry is None:
            grid_a = _linspace(
                values["phi_a_start_pi"] * math.pi,
                values["phi_a_stop_pi"] * math.pi,
                values["phi_a_points"],
            )
            grid_c = _linspace(
                values["phi_c_start_pi"] * math.pi,
                values["phi_c_stop_pi"] * math.pi,
                values["phi_c_points"],
            )
        else:
            try:
                grid_a = phase_grid_from_angles(
                    np.radians(
                        _linspace(
                            self.plates["angle_a_start_deg"],
                            self.plates["angle_a_stop_deg"],
                            values["phi_a_points"],
                        )
                    ),
                    geometry,
                )
                grid_c = phase_grid_from_angles(
                    np.radians(
                        _linspace(
                            self.plates["angle_c_start_deg"],
                            self.plates["angle_c_stop_deg"],
                            values["phi_c_points"],
                        )
                    ),
                    geometry,
                )
            except TotalInternalReflectionError as e:
                raise InvalidConfigError(f"[plates] {e}") from e
        return ScanSpec(
            grid_A=grid_a,
            grid_C=grid_c,
            runs_per_point=values["runs_per_point"],
            leg_duration=values["leg_duration_s"],
            base_seed=self.seed,
            origin=PhasePoint(values["origin_a_pi"] * math.pi, values["origin_c_pi"] * math.pi),
        )

    def sweep_phase(self) -> PhasePoint:
        return PhasePoint(self.sweep["phi_a_pi"] * math.pi, self.sweep["phi_c_pi"] * math.pi)

    def sweep_scale_factors(self) -> list[float]:
        """Scale factors as given, or solved from the target detected rates."""
        if self.sweep["scale_factors"]:
            return list(self.sweep["scale_factors"])
        return scale_factors_for_targets(
            self.interferometer_config(),
            self.detector_model(),
            self.sweep_phase(),
            self.sweep["target_rates_cps"],
        )

    def output_path(self) -> Path:
        directory = Path(self.run["output_dir"] or settings.THREEPATH_OUTPUT_DIR)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise InvalidConfigError(f"cannot create output directory {directory}: {e.strerror}") from e
        if not os.access(directory, os.W_OK):
            raise InvalidConfigError(f"output directory {directory} is not writable")
        return directory
