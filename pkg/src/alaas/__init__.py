"""Active learning as a service: strategies, pipelined selection, server and client."""

__version__ = "0.1.0"
