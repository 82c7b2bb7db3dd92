"""dyslat: dysarthria latent-space toolkit.

Trains a multi-task mel-spectrogram autoencoder whose 2-d bottleneck doubles
as a dysarthria detector input, evaluates it speaker-independently, and
serves reconstruction / detection over a small HTTP API.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, no_grad  # noqa: F401
