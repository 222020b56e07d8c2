"""Neural scoring of maximum common subgraph size (MCES and MCCS) for graph retrieval."""

__version__ = "0.1.0"
