"""Transience/recurrence classification and exact simulation of M/G/inf queues."""
__version__ = "0.1.0"
