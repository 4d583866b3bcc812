"""Desk-scale stress monitoring: PPG windows to HRV features, density-driven
EMA label queries, stress classifiers, and the services that tie them together.
"""

__version__ = "0.1.0"
