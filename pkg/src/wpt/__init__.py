"""Weight-preserving tempering for multimodal targets."""
from .mixture_targets import HatContext, MixtureTarget, load_mixture, mixture_from_dict
from .tempered_targets import GVariant, TemperedTarget, TemperKind, make_tempered

__all__ = ["HatContext", "MixtureTarget", "load_mixture", "mixture_from_dict",
           "GVariant", "TemperedTarget", "TemperKind", "make_tempered"]
__version__ = "0.1.0"
