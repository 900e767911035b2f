"""Quaternionic Monge-Ampere toolkit: hypercomplex linear algebra, exterior
calculus of (p,q)-forms, simultaneous diagonalisation, a spectral solver on
flat hyperKaehler tori and numerical checks of the C^0-estimate chain."""

__version__ = "0.1.0"
