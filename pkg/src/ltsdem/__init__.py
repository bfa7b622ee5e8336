"""Rigid-body DEM with per-cluster local time stepping.

Particles carry individual time stamps; clusters of potentially colliding
particles advance together by an optimistically chosen step bounded by
space-time continuous collision detection over multiscale triangle
surrogates. Contacts resolve through implicit sequential impulses.
"""

__version__ = "0.1.0"
