"""Tensor calculus on Taylor jets and flat tori, with a gauge-fixed prescribed-curvature solver."""

from .errors import RicciForgeError
from .geometry import ChartMetricJet, Geometry, OpRequest, operator_apply
from .jets import Jet, JetAlgebra, get_algebra

__all__ = ["ChartMetricJet", "Geometry", "Jet", "JetAlgebra", "OpRequest", "RicciForgeError",
           "get_algebra", "operator_apply"]
__version__ = "0.1.0"
