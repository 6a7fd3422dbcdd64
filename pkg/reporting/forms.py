"""
Validation of RunConfig sections.

Every INI section is bound to one form; values arrive as strings and leave
as cleaned Python values in the units named by the key.
"""

import configparser
import math

from django import forms

from threepath.exceptions import InvalidConfigError

SEED_MAX = (1 << 64) - 1


class IniBooleanField(forms.Field):
    """Boolean spelled the way configparser spells it (yes/no, true/false, 1/0, on/off)."""

    def to_python(self, value):
        if isinstance(value, bool):
            return value
        if value in self.empty_values:
            return None
        try:
            return configparser.ConfigParser.BOOLEAN_STATES[str(value).strip().lower()]
        except KeyError:
            raise forms.ValidationError(f"{value!r} is not a boolean")


class FloatListField(forms.Field):
    """Comma separated floats."""

    def to_python(self, value):
        if value in self.empty_values:
            return None
        if isinstance(value, (list, tuple)):
            return tuple(float(v) for v in value)
        try:
            items = tuple(float(item) for item in str(value).split(",") if item.strip())
        except ValueError:
            raise forms.ValidationError(f"{value!r} is not a comma separated list of numbers")
        if not items:
            return None
        return items

    def validate(self, value):
        super().validate(value)
        if value and not all(math.isfinite(item) for item in value):
            raise forms.ValidationError("list values must be finite")


class FiniteFloatField(forms.FloatField):
    def validate(self, value):
        super().validate(value)
        if value is not None and not math.isfinite(value):
            raise forms.ValidationError("must be finite")


class SectionForm(forms.Form):
    """
    One INI section. ``defaults`` fill keys the file leaves out; unknown
    keys are errors so typos fail before any run starts.
    """

    section = ""
    defaults: dict = {}

    @classmethod
    def clean_section(cls, values: dict) -> dict:
        unknown = sorted(set(values) - set(cls.base_fields))
        data = {**cls.defaults, **values}
        form = cls(data=data)
        errors = [f"[{cls.section}] {key}: unknown key" for key in unknown]
        if not form.is_valid():
            for key, messages in form.errors.items():
                label = key if key != forms.forms.NON_FIELD_ERRORS else "section"
                errors += [f"[{cls.section}] {label}: {message}" for message in messages]
        if errors:
            raise InvalidConfigError("invalid configuration:\n  " + "\n  ".join(errors))
        return {key: form.cleaned_data[key] for key in cls.base_fields}


class RunForm(SectionForm):
    section = "run"
    defaults = {"seed": "0", "output_dir": "", "threads": "1", "verbosity": "1"}

    seed = forms.IntegerField(min_value=0, max_value=SEED_MAX)
    output_dir = forms.CharField(required=False)
    threads = forms.IntegerField(min_value=1)
    verbosity = forms.IntegerField(min_value=0, max_value=3)


class InterferometerForm(SectionForm):
    section = "interferometer"
    defaults = {
        "rate_a_cps": "2080",
        "rate_b_cps": "5760",
        "rate_c_cps": "1990",
        "phi_a_pi": "0",
        "phi_c_pi": "0",
        "visibility_ab": "1",
        "visibility_ac": "1",
        "visibility_bc": "1",
    }

    rate_a_cps = FiniteFloatField(min_value=0.0)
    rate_b_cps = FiniteFloatField(min_value=0.0)
    rate_c_cps = FiniteFloatField(min_value=0.0)
    phi_a_pi = FiniteFloatField()
    phi_c_pi = FiniteFloatField()
    visibility_ab = FiniteFloatField(min_value=0.0, max_value=1.0)
    visibility_ac = FiniteFloatField(min_value=0.0, max_value=1.0)
    visibility_bc = FiniteFloatField(min_value=0.0, max_value=1.0)


class DetectorForm(SectionForm):
    section = "detector"
    defaults = {"dead_time_ns": "47", "dark_rate_cps": "284", "efficiency": "1"}

    dead_time_ns = FiniteFloatField(min_value=0.0)
    dark_rate_cps = FiniteFloatField(min_value=0.0)
    efficiency = FiniteFloatField(max_value=1.0)

    def clean_efficiency(self):
        efficiency = self.cleaned_data["efficiency"]
        if efficiency <= 0.0:
            raise forms.ValidationError("efficiency must be in (0, 1]")
        return efficiency


class SourceForm(SectionForm):
    section = "source"
    defaults = {
        "statistics": "poissonian",
        "period_ns": "",
        "intensity_noise": "0",
        "drift_per_leg": "0",
    }

    statistics = forms.ChoiceField(
        choices=[("poissonian", "poissonian"), ("regular_emitter", "regular_emitter")]
    )
    period_ns = FiniteFloatField(required=False)
    intensity_noise = FiniteFloatField(min_value=0.0)
    drift_per_leg = FiniteFloatField()

    def clean(self):
        cleaned_data = super().clean()
        period = cleaned_data.get("period_ns")
        if cleaned_data.get("statistics") == "regular_emitter":
            if period is None or period <= 0.0:
                raise forms.ValidationError("a regular emitter needs period_ns > 0")
        return cleaned_data


class MeasurementForm(SectionForm):
    section = "measurement"
    defaults = {
        "n_runs": "1000",
        "leg_duration_s": "1",
        "randomize_order": "true",
        "violation_strength": "0",
    }

    n_runs = forms.IntegerField(min_value=1)
    leg_duration_s = FiniteFloatField()
    randomize_order = IniBooleanField()
    violation_strength = FiniteFloatField()

    def clean_leg_duration_s(self):
        duration = self.cleaned_data["leg_duration_s"]
        if duration <= 0.0:
            raise forms.ValidationError("leg duration must be > 0")
        return duration


class ScanForm(SectionForm):
    section = "scan"
    defaults = {
        "phi_a_start_pi": "0",
        "phi_a_stop_pi": "2",
        "phi_a_points": "41",
        "phi_c_start_pi": "0",
        "phi_c_stop_pi": "2",
        "phi_c_points": "41",
        "origin_a_pi": "1.7",
        "origin_c_pi": "0.19",
        "runs_per_point": "10",
        "leg_duration_s": "1",
    }

    phi_a_start_pi = FiniteFloatField()
    phi_a_stop_pi = FiniteFloatField()
    phi_a_points = forms.IntegerField(min_value=1)
    phi_c_start_pi = FiniteFloatField()
    phi_c_stop_pi = FiniteFloatField()
    phi_c_points = forms.IntegerField(min_value=1)
    origin_a_pi = FiniteFloatField()
    origin_c_pi = FiniteFloatField()
    runs_per_point = forms.IntegerField(min_value=1)
    leg_duration_s = FiniteFloatField()

    def clean(self):
        cleaned_data = super().clean()
        for axis in ("a", "c"):
            start = cleaned_data.get(f"phi_{axis}_start_pi")
            stop = cleaned_data.get(f"phi_{axis}_stop_pi")
            points = cleaned_data.get(f"phi_{axis}_points")
            if None in (start, stop, points):
                continue
            if points > 1 and stop <= start:
                raise forms.ValidationError(
                    f"phi_{axis}_stop_pi must exceed phi_{axis}_start_pi"
                )
        duration = cleaned_data.get("leg_duration_s")
        if duration is not None and duration <= 0.0:
            raise forms.ValidationError("leg duration must be > 0")
        return cleaned_data


class SweepForm(SectionForm):
    section = "sweep"
    defaults = {
        "target_rates_cps": "35925, 111288, 260934, 451121",
        "scale_factors": "",
        "phi_a_pi": "0",
        "phi_c_pi": "0",
        "n_runs": "1000",
        "leg_duration_s": "1",
    }

    target_rates_cps = FloatListField(required=False)
    scale_factors = FloatListField(required=False)
    phi_a_pi = FiniteFloatField()
    phi_c_pi = FiniteFloatField()
    n_runs = forms.IntegerField(min_value=1)
    leg_duration_s = FiniteFloatField()

    @classmethod
    def clean_section(cls, values: dict) -> dict:
        # Naming scale factors replaces the default target list.
        if values.get("scale_factors", "").strip() and "target_rates_cps" not in values:
            values = {**values, "target_rates_cps": ""}
        return super().clean_section(values)

    def clean(self):
        cleaned_data = super().clean()
        targets = cleaned_data.get("target_rates_cps")
        factors = cleaned_data.get("scale_factors")
        if bool(targets) == bool(factors):
            raise forms.ValidationError(
                "give exactly one of target_rates_cps and scale_factors"
            )
        for value in targets or factors or ():
            if value <= 0.0:
                raise forms.ValidationError("sweep values must be > 0")
        duration = cleaned_data.get("leg_duration_s")
        if duration is not None and duration <= 0.0:
            raise forms.ValidationError("leg duration must be > 0")
        return cleaned_data


class PlatesForm(SectionForm):
    """
    Phase-plate geometry; with this section the scan grid is given by
    plate rotation angles instead of phases.
    """

    section = "plates"
    defaults = {
        "thickness_mm": "0.9",
        "wavelength_nm": "800",
        "n_air": "1",
        "n_glass": "1.5",
        "zero_angle_offset_pi": "0",
        "angle_a_start_deg": "0",
        "angle_a_stop_deg": "10",
        "angle_c_start_deg": "0",
        "angle_c_stop_deg": "10",
    }

    thickness_mm = FiniteFloatField()
    wavelength_nm = FiniteFloatField()
    n_air = FiniteFloatField()
    n_glass = FiniteFloatField()
    zero_angle_offset_pi = FiniteFloatField()
    angle_a_start_deg = FiniteFloatField()
    angle_a_stop_deg = FiniteFloatField()
    angle_c_start_deg = FiniteFloatField()
    angle_c_stop_deg = FiniteFloatField()

    def clean(self):
        cleaned_data = super().clean()
        for name in ("thickness_mm", "wavelength_nm", "n_air", "n_glass"):
            value = cleaned_data.get(name)
            if value is not None and value <= 0.0:
                self.add_error(name, "must be > 0")
        for axis in ("a", "c"):
            start = cleaned_data.get(f"angle_{axis}_start_deg")
            stop = cleaned_data.get(f"angle_{axis}_stop_deg")
            if start is not None and stop is not None and start < 0.0:
                self.add_error(f"angle_{axis}_start_deg", "plate angles must be >= 0")
            if start is not None and stop is not None and stop <= start:
                self.add_error(f"angle_{axis}_stop_deg", "must exceed the start angle")
        return cleaned_data


SECTION_FORMS = {
    form.section: form
    for form in (
        RunForm,
        InterferometerForm,
        DetectorForm,
        SourceForm,
        MeasurementForm,
        ScanForm,
        SweepForm,
        PlatesForm,
    )
}
OPTIONAL_SECTIONS = ("plates",)
