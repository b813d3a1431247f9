"""Cached object-embedding retrieval engine: python bindings."""

try:
    from ._objret import *  # noqa: F401,F403  (wheel layout)
except ImportError:
    from _objret import *  # noqa: F401,F403   (in-tree build layout)
