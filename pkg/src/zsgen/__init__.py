"""Zero-shot learning via generative knowledge-to-visual feature synthesis.

Pieces: class-name-similarity article overlay and TF-IDF encoding, a
triplet-constrained adversarial feature generator, a pseudo-labeling
self-training loop, and the ZSL/GZSL/retrieval evaluation suite.
"""

__version__ = "0.1.0"
