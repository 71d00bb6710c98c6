"""Cost-optimal scheduling of process steps onto containers on leased VMs."""

__version__ = "0.1.0"
