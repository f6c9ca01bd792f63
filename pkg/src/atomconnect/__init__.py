"""All-atom structure-to-token connector at desk scale."""

__version__ = "0.1.0"
