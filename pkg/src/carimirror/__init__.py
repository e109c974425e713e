"""carimirror: video-to-3D-caricature engine.

Static modeling (multi-view neutral capture -> blendshape rig + caricature
texture atlas), per-frame blendshape tracking, and latent-space style
translation, exposed through a FastAPI service with a thin CLI client.
"""

__version__ = "0.1.0"
