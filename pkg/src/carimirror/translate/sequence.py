"""Frame-sequence style translation with latent temporal smoothing."""
from __future__ import annotations

import time

from .network import StyleTranslator
from .smoothing import DEFAULT_MU_SMO, smooth_latent


def translate_sequence(meshes, translator: StyleTranslator, mu_smo=DEFAULT_MU_SMO,
                       source_domain="regular", return_timing=False):
    """encode -> G -> smooth -> decode per frame.

    Smoothing regresses against the raw translated codes of the two previous
    frames; the first two frames pass through unsmoothed.
    """
    out = []
    raw_history = []
    per_frame = []
    for mesh in meshes:
        t0 = time.perf_counter()
        code = translator.encode(mesh, source_domain)
        translated = translator.translate_latent(code)
        if len(raw_history) >= 2:
            smoothed = smooth_latent(raw_history[-2], raw_history[-1], translated, mu_smo)
        else:
            smoothed = translated
        raw_history.append(translated)
        out.append(translator.decode(smoothed))
        per_frame.append(time.perf_counter() - t0)
    if return_timing:
        return out, per_frame
    return out
