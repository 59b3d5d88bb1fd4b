"""Experiment orchestration: sweeps, defense studies, scenarios, files and CLI."""
