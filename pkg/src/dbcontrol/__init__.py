"""Finite-element solution of simultaneous distributed-boundary elliptic control problems."""
