"""
cogmask - revealed-preference IRL and cognition masking for cognitive radars
"""

__version__ = "1.0.0"
