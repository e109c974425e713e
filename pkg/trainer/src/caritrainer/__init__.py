"""caritrainer: trains the VAE-CycleGAN style-translation networks and
exports portable weight bundles for the carimirror engine."""

__version__ = "0.1.0"
