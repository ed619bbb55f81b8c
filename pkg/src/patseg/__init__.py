"""Character-based word segmentation for technical Chinese text.

The toolkit labels every character of a sentence with a BMES position tag
using a linear-chain CRF.  Feature extractors cover character windows,
per-document repetition statistics, and knowledge mined from an external
segmented corpus; four training regimes support domain adaptation between
an everyday-language source corpus and a technical target corpus.
"""

__version__ = "0.1.0"
