"""
Configuration Layer
Contains tolerances, grid, solver and logging settings
"""
