"""Magnetic continuum model of twisted bilayer graphene."""

__version__ = "0.1.0"
