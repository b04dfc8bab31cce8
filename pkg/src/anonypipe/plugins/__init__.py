"""Adapters for real models. Each imports its framework only when instantiated."""
