"""Velocity-free (position-feedback) manipulator control: models, laws, simulation."""
