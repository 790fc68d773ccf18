class DexliftError(Exception):
    """Base class of every error raised by dexlift."""
