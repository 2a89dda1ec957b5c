"""Isogeometric collocation BEM for 2D elastostatics with H-matrix operators."""

__version__ = "0.1.0"
