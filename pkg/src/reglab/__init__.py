"""Refined generalized focal loss laboratory.

Losses (focal, spatially refined, uncertainty-aware, joint), class
rebalancing, four desk-scale optimizers, detection metrics, a synthetic
imbalanced-data generator and a toy trainer.
"""

__version__ = "0.1.0"
