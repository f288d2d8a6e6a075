"""Non-intrusive SIG/BAK/OVRL (P.835) score prediction toolkit."""

__version__ = "0.1.0"
