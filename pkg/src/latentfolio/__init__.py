"""latentfolio: latent-feature state spaces for portfolio optimization research."""

__version__ = "0.1.0"
