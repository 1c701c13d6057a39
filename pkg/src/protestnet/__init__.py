"""Multi-label protest-attribute image classification from scratch."""

CLASS_NAMES = ("fire", "flag", "large_crowd", "other", "police", "sign", "student")
NUM_CLASSES = len(CLASS_NAMES)
OTHER = CLASS_NAMES.index("other")

__version__ = "0.1.0"
