"""Scenarios, oracles, metrics and the command line."""
