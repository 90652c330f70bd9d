"""Datasets, evaluation metrics, ROC sweeps and report files."""
