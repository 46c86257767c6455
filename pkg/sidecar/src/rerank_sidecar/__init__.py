"""HTTP sidecar serving cross-encoder rerankers over POST /rerank."""

__version__ = "0.1.0"

from rerank_sidecar.app import create_app
from rerank_sidecar.config import SidecarConfig

__all__ = ["SidecarConfig", "create_app", "__version__"]
