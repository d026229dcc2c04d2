"""Finsler geometry toolkit: metric models, spray and curvature from
Taylor jets, geodesics and distances, Busemann functions and a sampled
convexity certificate."""

from .busemann import BusemannField, busemann_estimate, extract_ray
from .certificate import (CertificateProfile, SamplingPlan, VerifyPlan, certificate_verify,
                          curvature_profile, profile_from_values)
from .curvature import (curvature_report, flag_curvature, riemann, t_curvature, t_dot,
                        weighted_flag)
from .errors import (ChartError, DegenerateError, FinslerError, JetDepthError, MetricError,
                     ShootingError)
from .geodesics import distance, exp_map, integrate_geodesic, parallel_transport, shoot
from .metrics import MetricModel, catalog_names, make_flag, make_model
from .spray import berwald, landsberg, nonlinear_connection, spray
from .suite import verify_suite
from .tolerances import Tolerances

__all__ = [
    "BusemannField", "busemann_estimate", "extract_ray",
    "CertificateProfile", "SamplingPlan", "VerifyPlan", "certificate_verify",
    "curvature_profile", "profile_from_values",
    "curvature_report", "flag_curvature", "riemann", "t_curvature", "t_dot", "weighted_flag",
    "ChartError", "DegenerateError", "FinslerError", "JetDepthError", "MetricError",
    "ShootingError",
    "distance", "exp_map", "integrate_geodesic", "parallel_transport", "shoot",
    "MetricModel", "catalog_names", "make_flag", "make_model",
    "berwald", "landsberg", "nonlinear_connection", "spray",
    "verify_suite", "Tolerances",
]
__version__ = "0.1.0"
