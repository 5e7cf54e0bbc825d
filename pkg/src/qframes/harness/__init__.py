"""Experiment runner: config files, repeated sessions, reports."""
