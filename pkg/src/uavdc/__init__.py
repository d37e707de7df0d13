"""Grid-world UAV data collection simulator with hierarchical DDPG agents."""

__version__ = "0.1.0"
