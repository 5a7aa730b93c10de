"""Demonstration scaling for planar-arm imitation learning.

From a single seed demonstration: detect key poses, synthesize diverse
candidate trajectories, filter them by human review and DTW-based
automatic validation, then train and evaluate a behavioral-cloning policy
on the scaled dataset.
"""

__version__ = "0.1.0"
