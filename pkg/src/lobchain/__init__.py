"""lobchain: microstructure measurement for on-chain binary prediction markets.

Reconstructs L2 books from a taker-blind delta feed, decodes authoritative
on-chain fills, calibrates feed-based trade-direction inference against the
chain record, and computes spread/impact measures and panel stylized facts,
with a synthetic venue providing ground truth for verification.
"""

__version__ = "0.1.0"
