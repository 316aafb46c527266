"""Certified positive supersolutions for degenerate logistic boundary value problems.

Submodules are imported explicitly (``from supersol.verify import ...``) so
that the checker can be loaded without the construction code.
"""

__version__ = "0.1.0"
