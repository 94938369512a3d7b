"""Terrain-following / terrain-avoidance route planning with a fluid-field PPO agent."""

__version__ = "0.1.0"
