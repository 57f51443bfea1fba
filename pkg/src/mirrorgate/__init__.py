"""Switching mirror descent with duality-gap certificates for constrained convex problems."""
__version__ = "0.1.0"
