"""Memory-augmented template-matching tracker.

An attentional LSTM controller reads and writes an external slot memory of
object templates (positive and negative). Retrieved templates are blended
with the initial template through a channel-wise residual gate, distractor
templates are subtracted through a canceling gate, and the final template
is correlated against search features to localize the target.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, no_grad
from .model import desk_config, full_config, init_params
from .tracker import BoundingBox, track_sequence
from .train import TrainConfig, train as train_model

__all__ = [
    "Tensor", "backward", "no_grad",
    "desk_config", "full_config", "init_params",
    "BoundingBox", "track_sequence",
    "TrainConfig", "train_model",
    "__version__",
]
