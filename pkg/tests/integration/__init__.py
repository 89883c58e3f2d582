"""Integration tests for Clean Code Reviewer."""
