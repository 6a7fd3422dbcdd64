import factory

from optics.formulas import detector_forward
from optics.types import DetectorModel

from .types import QuadrupleMeasurement

REFERENCE_DETECTOR = DetectorModel(dead_time_tau=47e-9, dark_rate_R0=284.0)


class QuadrupleMeasurementFactory(factory.Factory):
    """
    Noiseless quadruple of two equal beams seen through ``detector``.

    ``combined`` is the incident rate with both beams open.
    """

    class Meta:
        model = QuadrupleMeasurement
        exclude = ("detector", "combined")

    detector = REFERENCE_DETECTOR
    combined = 2e5
    dark_rate = factory.LazyAttribute(lambda o: detector_forward(0.0, o.detector))
    rate_a = factory.LazyAttribute(lambda o: detector_forward(o.combined / 2, o.detector))
    rate_b = factory.LazyAttribute(lambda o: detector_forward(o.combined / 2, o.detector))
    rate_ab = factory.LazyAttribute(lambda o: detector_forward(o.combined, o.detector))
    duration = 10.0
