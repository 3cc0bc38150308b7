"""Edge-aware reconstruction of 3-D vertebra volumes from bi-planar projections."""

__version__ = "0.1.0"
