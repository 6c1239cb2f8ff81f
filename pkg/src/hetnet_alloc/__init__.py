"""Joint user association, subchannel and power allocation for multi-cell OFDMA HetNets."""

__version__ = "0.1.0"
