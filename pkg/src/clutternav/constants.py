"""Capacity constants shared by the state encoding and its producers."""

# Padded state capacity: must exceed the largest scenario object count (30).
N_MAX = 40

# Scalars per state row; see features.FeatureRow for the layout.
FEATURE_DIM = 9
