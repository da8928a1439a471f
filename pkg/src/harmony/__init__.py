"""Accuracy-balanced classification via a routed ensemble.

A conventional target model handles most classes; per-group complementary
models, trained with biased class weights, handle the classes the target
is weak on; a conductor routes each input to one of them. Inference costs
two forward passes per sample regardless of the number of complementary
models.
"""

__version__ = "0.1.0"
