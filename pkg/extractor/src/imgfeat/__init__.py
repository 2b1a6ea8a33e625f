"""Per-image visual feature extraction.

Produces the binary feature file consumed by the recommendation library:
one vector per item, a CNN block (penultimate-layer activations of an
image-classification backbone) concatenated with an aesthetic-proxy block
(HSV statistics, complementary-color and duotone scores, contrast
measures), plus a separate per-item HSV histogram table.
"""

__version__ = "0.1.0"
