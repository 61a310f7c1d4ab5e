"""Host-side adapter: exposes factrie's constrained decoding as a
logits-processor callable for autoregressive generation loops."""

__version__ = "0.1.0"

from .processor import AdapterConfig, AdapterHandle, MaskProcessor, make_processor
from .beams import BeamIndexOutOfRange, BeamMaskProcessor, attach_beams

__all__ = [
    "__version__",
    "AdapterConfig",
    "AdapterHandle",
    "MaskProcessor",
    "make_processor",
    "BeamIndexOutOfRange",
    "BeamMaskProcessor",
    "attach_beams",
]
