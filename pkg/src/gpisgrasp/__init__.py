"""Grasp planning on Gaussian-process implicit surfaces.

Palm poses are searched by Bayesian optimization with local adaption on
surface charts; finger joints are refined by consensus ADMM; grasps are
scored by wrench-space epsilon and volume quality.
"""

__version__ = "0.1.0"
