"""Field-of-view aware Gaussian mixture estimation.

Recursive Gaussian splitting along region boundaries, a Gaussian mixture
Bernoulli filter for set-valued measurements, and field-of-view cardinality
distributions for common random finite set models.
"""
from .gaussmix import GaussianComponent, GaussianMixture, l2_distance, mixture_moments, reduce
from .regions import (Box, Complement, Disc, GridSpec, HalfSpace, Intersection, Polygon,
                      Region, Union, region_from_dict)
from .splitlib import SplitLibrary, SplitParams, optimize_split
from .splitter import SplitConfig, partition, split_for_fov, split_for_multifov

__version__ = "0.1.0"
