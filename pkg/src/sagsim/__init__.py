"""Online decentralized offloading in a satellite-UAV-ground edge network."""

__version__ = "0.1.0"
