"""Wavespeed fields, nonlocal cone constraints and lookahead progress."""

from .field import Disc, HalfSpace, Rect, Region, WavespeedField

__all__ = ["Disc", "HalfSpace", "Rect", "Region", "WavespeedField"]
