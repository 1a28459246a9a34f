"""HNN walk lab - core modules.

Normal forms on HNN extensions of finite groups (and of the integers), random
walk simulation, exit-time and regeneration analysis, drift/CLT estimators and
the closed forms of the degenerate integer projection.
"""

__version__ = "0.3.0"

# Keep package imports minimal; submodules are imported explicitly (`from src.walk_engine import ...`).
