"""Self-supervised gridworld navigation with a dynamic topological graph memory."""

__version__ = "0.1.0"
