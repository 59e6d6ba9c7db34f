"""Space-time variational formulations of the heat and wave equations,
checked mode by mode in the Dirichlet eigenbasis."""

__version__ = "0.1.0"
