"""Spectral laboratory for parabolic tent spaces and mild Navier-Stokes solutions."""
