"""Adverb embeddings from narrated video.

Learns a joint video-text space in which each adverb is a transformation
of action embeddings, with weakly supervised temporal attention over
untrimmed per-second feature windows.
"""

__version__ = "0.1.0"

from .backend import active_backend  # noqa: F401
