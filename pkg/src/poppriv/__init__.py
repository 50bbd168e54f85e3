"""Population protocols under a uniform random scheduler, with private Remainder."""

__version__ = "0.1.0"
