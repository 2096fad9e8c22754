"""Placeholder, filled in during the build."""
