"""Synchronous-round simulator for agreement lower bounds and validity solvability."""
