"""Linear frequency-principle model of wide two-layer ReLU networks."""

__version__ = "0.1.0"
