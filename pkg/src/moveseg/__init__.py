"""Motion-segmentation pseudo labels and a small mask learner."""

__version__ = "0.1.0"
