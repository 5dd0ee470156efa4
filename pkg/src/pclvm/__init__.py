"""Supervised mixtures and LDA fit with a weighted label-prediction term."""
