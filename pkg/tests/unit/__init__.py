"""Unit tests for Clean Code Reviewer."""
