"""Shared thresholds.  Energy factors and evaluation metrics read the same
values so that "satisfied" means the same thing in both places."""

import math

D_MAX = 1.5  # m, Near
THETA_MAX = math.radians(15.0)  # rad, Facing / AlignedWith
M_MAX = 0.05  # m, StableAgainst / OnTopOf contact
ADJACENT_GAP = 0.3  # m, AdjacentTo footprint gap
OVERLAP_TOL = 1e-4  # m^2, collision / out-of-boundary
LF_CELL = 0.05  # m
GROUP_RADIUS = 1.5  # m
CLEARANCE_DEPTH = 0.8  # m, access strip in front of doors
GEOM_EPS = 1e-6
