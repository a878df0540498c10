"""Discrete-event network simulation."""
