"""
Package initialization
"""

__version__ = "1.0.0"
__description__ = "Controller matching toolkit - inverse optimal control for MPC and MHE"
