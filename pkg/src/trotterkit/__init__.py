"""Trotter product formulas for non-autonomous evolution equations.

Splitting schemes for ``u' = -(A + B(t)) u``, a reference propagator, the
evolution-space picture, numeric audits of the assumptions behind the
convergence rate, and a heat-with-potential test problem.
"""
from .errors import *  # noqa: F401,F403
from .generators import Generator, TimeFamily, audit, check_A_stability, constant_family
from .linops import expm, frac_power, operator_norm
from .propagator import (ConvergenceReport, DeltaMesh, ReferenceCache, SchemeKind,
                         convergence_report, fit_rate, reference_propagator, trotter_product)

__version__ = "0.1.0"
