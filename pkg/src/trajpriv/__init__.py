"""Optimal trajectory-aware location privacy mechanisms."""
