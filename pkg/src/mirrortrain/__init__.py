"""Synthetic-oracle toolkit comparing mimicked and mirrored labeling of hand
kinematics for myoelectric decoder training."""

__version__ = "0.1.0"
