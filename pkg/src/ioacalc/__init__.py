"""I/O automata calculus: discrete systems and their composition, channel-coupled protocols, role coordination."""

__version__ = "0.1.0"
