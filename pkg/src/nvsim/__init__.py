"""Three-level control of NV-centre spins: dynamics, filter functions, coherence."""

__version__ = "0.1.0"
