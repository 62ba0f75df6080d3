"""Worst-case and probabilistic robustness certificates for feed-forward classifiers.

Thin wrapper over the compiled ``_proven`` extension. Enum arguments accept
either the enum member or its name as a string.
"""

import json
import os

from ._proven import (
    Activation,
    ActivationError,
    Aggregation,
    CertificateMethod,
    ClassIndexError,
    CovarianceError,
    DimensionError,
    MarginLinearBounds,
    Network,
    NoiseKind,
    Norm,
    NumericError,
    ParseError,
    ProbCertificate,
    ProvenError,
    RelaxationMode,
    ResolutionError,
    TiedPredictionError,
    attack_search,
    certify_proven_radius,
    certify_worst_case,
    convolution_bounds,
    gaussian_bounds,
    hoeffding_bounds,
    margin_bounds,
    mc_probability,
    minimize_affine_over_ball,
    preactivation_bounds,
    relax_activation,
    uniform_sum_cdf,
)
from . import _proven

DEFAULT_CONFIDENCES = (0.9999, 0.75, 0.50, 0.25, 0.05)

_NORMS = {"inf": Norm.linf, "linf": Norm.linf, "2": Norm.l2, "l2": Norm.l2, "1": Norm.l1, "l1": Norm.l1}


def _enum(kind, value):
    if isinstance(value, kind):
        return value
    if kind is Norm:
        return _NORMS[str(value)]
    if kind is Aggregation:
        value = {"min": "min_gamma", "union": "union_bound"}.get(value, value)
    return getattr(kind, value)


def certify(model, inputs, *, norm="inf", mode="adaptive", noise="bounded", method="hoeffding",
            aggregation="min", confidences=DEFAULT_CONFIDENCES, targets="all", eps_max=1.0,
            tolerance=1e-4, seed=0, validate_mc=0, grid_points=1 << 14, covariance=None,
            csv=False):
    """Certify every input file against a model file and return the report dict.

    ``targets`` is "all", "random" or a list of class indices. With
    ``csv=True`` the table-shaped CSV text is returned alongside the report.
    """
    explicit = []
    if not isinstance(targets, str):
        explicit = [int(t) for t in targets]
        targets = "list"
    report, table = _proven._certify_files(
        os.fspath(model), [os.fspath(p) for p in inputs], _enum(Norm, norm),
        _enum(RelaxationMode, mode), _enum(NoiseKind, noise), _enum(CertificateMethod, method),
        _enum(Aggregation, aggregation), list(confidences), targets, explicit, float(eps_max),
        float(tolerance), int(seed), int(validate_mc), int(grid_points),
        None if covariance is None else os.fspath(covariance))
    report = json.loads(report)
    return (report, table) if csv else report


__all__ = [name for name in dir() if not name.startswith("_")]
