"""postersidecar: a reference backend for the posterlens inference protocol.

Invoked as ``postersidecar --manifest <path> --tasks detect,embed,ethnicity
--out <dir>``; exit code 0 means a complete bundle sits in ``<out>``,
nonzero means no files were written there at all.
"""

__version__ = "0.1.0"

EMBED_DIM = 512

FOUR_CLASS_CATEGORIES = ("Asian", "Black", "Indian", "White")
SEVEN_CLASS_CATEGORIES = (
    "Black",
    "East Asian",
    "Indian",
    "Latino-Hispanic",
    "Middle Eastern",
    "Southeast Asian",
    "White",
)


class SidecarError(RuntimeError):
    """Fatal sidecar failure; the CLI maps it to a nonzero exit."""
