"""Exercise scoring from skeleton recordings.

Pipeline: ingest CSV recordings -> segment into repetitions -> extract
statistical features -> train baseline / boosted-tree models -> evaluate.
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
