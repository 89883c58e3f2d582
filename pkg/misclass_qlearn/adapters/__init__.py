"""Adapters between the estimators and files: CSV data, reports and sensitivity runs."""
