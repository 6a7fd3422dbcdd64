import factory

from .types import DetectorModel, InterferometerConfig, PhasePlateGeometry, PhasePoint


class PhasePointFactory(factory.Factory):
    class Meta:
        model = PhasePoint

    phi_A = 0.0
    phi_C = 0.0


class InterferometerConfigFactory(factory.Factory):
    """
    Single-path rates of the reference phase scan (2.08 / 5.76 / 1.99 kcps).
    """

    class Meta:
        model = InterferometerConfig

    rate_A = 2080.0
    rate_B = 5760.0
    rate_C = 1990.0
    phase = factory.SubFactory(PhasePointFactory)


class DetectorModelFactory(factory.Factory):
    """
    Detector with the calibrated 47 ns dead time and 284 cps dark rate.
    """

    class Meta:
        model = DetectorModel

    dead_time_tau = 47e-9
    dark_rate_R0 = 284.0
    efficiency = 1.0


class LinearDetectorFactory(DetectorModelFactory):
    dead_time_tau = 0.0
    dark_rate_R0 = 0.0


class PhasePlateGeometryFactory(factory.Factory):
    class Meta:
        model = PhasePlateGeometry

    thickness_d = 0.9e-3
    wavelength_lambda = 800e-9
    n1 = 1.0
    n2 = 1.5
