"""Runtime monitoring and action repair for black-box controllers.

A prediction model estimates the STL robustness an episode will reach from
the current (state, action) pair; actions predicted unsafe are repaired by a
targeted sign-gradient search before they reach the plant.
"""

__version__ = "0.1.0"
