"""Cross-domain adaptation toolkit for neural named-entity taggers.

Pipeline: corpus statistics -> confidence-weighted pivot lexicon ->
linear word-space projection -> BLSTM-CRF source model -> target model
with sentence/output adaptation layers trained under a two-rate scheme,
plus INIT/MULT baselines for comparison.
"""

__version__ = "0.1.0"
