import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.audio_branch import AudioBranchParams, audio_forward, init_audio_params
from models.fusion import FusionParams, fuse, init_fusion_params, predict_label
from models.layers import Initializer
from models.schema import FusionStrategy, ModelConfig
from models.video_branch import VideoBranchParams, init_video_params, video_forward
from numerics.functional import softmax_probabilities
from numerics.tensor import Tensor, no_grad
from utils.errors import CheckpointError, ConfigurationError

logger = logging.getLogger(__name__)


class MMFformer:
    """
    Video branch + audio branch + one fusion strategy, with a flat
    name -> Tensor view of every parameter.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        if config.audio_dim is None or config.video_dim is None:
            raise ConfigurationError("model config needs audio_dim and video_dim; use with_dims()")
        self.config = config
        self.strategy = FusionStrategy(config.fusion)
        self.video_cfg = config.video_frontend()
        self.audio_cfg = config.audio_frontend()

        init = Initializer(np.random.default_rng(seed), std=config.init_std)
        self.video: Optional[VideoBranchParams] = (
            init_video_params(self.video_cfg, init) if self.strategy.uses_video else None
        )
        self.audio: Optional[AudioBranchParams] = (
            init_audio_params(self.audio_cfg, init) if self.strategy.uses_audio else None
        )
        self.fusion: FusionParams = init_fusion_params(
            self.strategy, config.embed_dim, config.mlp_hidden, init,
            conv_layers=config.fusion_layers, kernel=config.fusion_kernel,
        )
        logger.debug(
            "Built %s model with %d parameter tensors", self.strategy.value, len(self.named_parameters())
        )

    # -- parameters ---------------------------------------------------------

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        named: List[Tuple[str, Tensor]] = []
        if self.video is not None:
            named.extend(self.video.named_tensors("video."))
        if self.audio is not None:
            named.extend(self.audio.named_tensors("audio."))
        named.extend(self.fusion.named_tensors("fusion."))
        return named

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(t.data.size for _, t in self.named_parameters())

    def zero_grad(self) -> None:
        for _, tensor in self.named_parameters():
            tensor.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise CheckpointError(f"parameter names differ: missing={missing[:3]} unexpected={unexpected[:3]}")
        for name, tensor in params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != tensor.shape:
                raise CheckpointError(f"{name}: stored shape {values.shape} != model shape {tensor.shape}")
            tensor.data = values.copy()

    # -- forward ------------------------------------------------------------

    def forward(self, audio, video, trace: Optional[List[np.ndarray]] = None) -> Tensor:
        """Two logits for one subject's [F, T_a] audio and [T_v, C] video features."""
        xa = audio_forward(Tensor(audio), self.audio, self.audio_cfg, trace) if self.audio is not None else None
        xv = video_forward(Tensor(video), self.video, self.video_cfg, trace) if self.video is not None else None
        return fuse(self.strategy, xv, xa, self.fusion, self.config.ln_eps, trace)

    __call__ = forward

    def predict_logits(self, samples: Sequence) -> np.ndarray:
        with no_grad():
            return np.stack([self.forward(s.audio, s.video).data for s in samples]) if samples else np.zeros((0, 2))

    def predict(self, samples: Sequence) -> Tuple[np.ndarray, np.ndarray]:
        """(labels, probability of class 1) for every sample."""
        logits = self.predict_logits(samples)
        labels = np.array([predict_label(row) for row in logits], dtype=int)
        probs = softmax_probabilities(logits)[:, 1] if len(logits) else np.zeros(0)
        return labels, probs
