"""Tent Pitcher spacetime meshing over 1D and 2D space domains."""
