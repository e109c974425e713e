from .chebconv import (
    apply_activation,
    cheb_graph_conv,
    estimate_lambda_max,
    normalized_graph_laplacian,
    scaled_operator,
)
from .network import DIRECTIONS, DOMAINS, LatentCode, StyleTranslator
from .sequence import translate_sequence
from .smoothing import DEFAULT_MU_SMO, smooth_latent
from .weights import FORMAT_VERSION, WeightsBundle, load_weights, make_bundle, save_weights

__all__ = [
    "apply_activation", "cheb_graph_conv", "estimate_lambda_max",
    "normalized_graph_laplacian", "scaled_operator",
    "DIRECTIONS", "DOMAINS", "LatentCode", "StyleTranslator",
    "translate_sequence", "DEFAULT_MU_SMO", "smooth_latent",
    "FORMAT_VERSION", "WeightsBundle", "load_weights", "make_bundle", "save_weights",
]
