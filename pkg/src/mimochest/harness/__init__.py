"""Scenario configs, Monte-Carlo sweeps, result files and the command line."""
