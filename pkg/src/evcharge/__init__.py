"""Charge-level prediction for battery electric vehicle trips.

Tabular trip records are encoded, converted to small grayscale images by
rank-matched feature placement, and classified by from-scratch k-NN,
decision-tree, random-forest and convolutional models.
"""

__version__ = "0.1.0"
