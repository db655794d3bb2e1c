"""Directional HiPOD model reduction for parametric advection-diffusion-reaction
problems, with interpolation and regression online predictors."""

__version__ = "0.1.0"
