"""Entropy-feature EEG pipeline: preprocessing, wavelet variants, seven
entropy estimators, a from-scratch RBF soft-margin classifier, repeated
cross-validation studies and a reproducible surrogate dataset generator."""

__version__ = "0.1.0"
