"""Selene: bi-impulsive Earth-Moon transfers in the planar circular restricted three-body problem."""

__version__ = "1.0.0"
