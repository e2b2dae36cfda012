"""Finite-truncation toolkit for analytic order, complex powers and spectral triples."""

from ._kernels import backend
from .pdo_calculus import (
    binomial_delta_identity_check,
    build_differential_algebra,
    build_pdo_from_do,
    commutator_tower,
    delta_square_identity_check,
    delta_tower,
    taylor_partial_sum,
    taylor_remainder_order,
)
from .spectral_core import (
    OperatorFamily,
    SpectrumModel,
    TruncatedOperator,
    cauchy_power,
    circle_spectrum,
    complex_power,
    estimate_analytic_order,
    oscillator_spectrum,
    sobolev_norm,
)
from .spectral_triple import (
    SpectralTripleModel,
    bounded_commutator_check,
    compact_resolvent_check,
    product_regularity_check,
    product_triple,
    regularity_probe,
)
from .weyl_algebra import HermiteRealization, WeylElement, filtration_check, homomorphism_check, parse, realize

__version__ = "0.1.0"

__all__ = [
    "HermiteRealization",
    "OperatorFamily",
    "SpectralTripleModel",
    "SpectrumModel",
    "TruncatedOperator",
    "WeylElement",
    "backend",
    "binomial_delta_identity_check",
    "bounded_commutator_check",
    "build_differential_algebra",
    "build_pdo_from_do",
    "cauchy_power",
    "circle_spectrum",
    "commutator_tower",
    "compact_resolvent_check",
    "complex_power",
    "delta_square_identity_check",
    "delta_tower",
    "estimate_analytic_order",
    "filtration_check",
    "homomorphism_check",
    "oscillator_spectrum",
    "parse",
    "product_regularity_check",
    "product_triple",
    "realize",
    "regularity_probe",
    "sobolev_norm",
    "taylor_partial_sum",
    "taylor_remainder_order",
]
