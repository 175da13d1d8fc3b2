"""Formal Birkhoff normal forms for momentum-conserving Hamiltonians."""
__version__ = "0.1.0"
