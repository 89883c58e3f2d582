"""Estimators, likelihoods and simulation for misclassified-outcome Q-learning."""
