"""Grounded unsupervised part-of-speech tagging.

Raw text is clustered into Brown word classes, and the resulting sequence of
cluster IDs is deciphered into Universal POS tags with EM against tag n-gram
models trained on other (parent) languages.
"""

__version__ = "0.1.0"
