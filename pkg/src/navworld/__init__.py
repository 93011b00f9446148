"""navworld: a desk-scale trainable navigation world model.

A latent video generator and an action policy jointly conditioned on a
learned vision-language context encoder, coupled by bidirectional
cross-attention and trained with flow matching; evaluated closed-loop in a
built-in occupancy-grid navigation simulator.
"""

__version__ = "0.1.0"
