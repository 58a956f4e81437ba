"""Bug data reduction for developer recommendation.

Combines instance selection and feature selection in either order, trains
top-k developer recommenders on the reduced data and predicts the better
reduction order for a new bug dataset.
"""

__version__ = "0.1.0"
