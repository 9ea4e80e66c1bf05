"""Finite-gap Schroedinger potentials, theta functions, Floquet spectra,
solitons and the elliptic Calogero-Moser system."""
from . import (
    calogero_moser,
    finite_gap_kdv,
    hyperelliptic,
    schrodinger_direct,
    solitons,
    special_functions,
    theta,
)
from .finite_gap_kdv import SpectralData, build_spectral_data, potential
from .hyperelliptic import HyperellipticCurve, SurfacePoint, period_matrices
from .schrodinger_direct import FourierPotential, band_scan, monodromy
from .special_functions import Lattice
from .theta import ThetaParams, theta_eval

__version__ = "0.1.0"
