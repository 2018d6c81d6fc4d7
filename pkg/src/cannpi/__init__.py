"""Path integration with learned replicas of continuous attractor networks."""

__version__ = "0.1.0"
