"""Deductive object programming runtime."""
