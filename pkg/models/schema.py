from enum import Enum
from typing import Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from numerics.functional import conv_output_length


class FusionStrategy(str, Enum):
    LATE_TRANSFORMER = "LT"
    INTERMEDIATE_TRANSFORMER = "IT"
    INTERMEDIATE_ATTENTION = "IA"
    ADD = "add"
    MULTIPLY = "multi"
    CONCAT = "concat"
    TENSOR_FUSION = "tf"
    AUDIO_ONLY = "audio"
    VIDEO_ONLY = "video"

    @property
    def uses_audio(self) -> bool:
        return self is not FusionStrategy.VIDEO_ONLY

    @property
    def uses_video(self) -> bool:
        return self is not FusionStrategy.AUDIO_ONLY

    @property
    def is_baseline(self) -> bool:
        return self in BASELINE_STRATEGIES


BASELINE_STRATEGIES = (
    FusionStrategy.ADD,
    FusionStrategy.MULTIPLY,
    FusionStrategy.CONCAT,
    FusionStrategy.TENSOR_FUSION,
)

# Row order of the ablation report.
ABLATION_STRATEGIES = (
    FusionStrategy.ADD,
    FusionStrategy.MULTIPLY,
    FusionStrategy.CONCAT,
    FusionStrategy.TENSOR_FUSION,
    FusionStrategy.LATE_TRANSFORMER,
    FusionStrategy.INTERMEDIATE_TRANSFORMER,
    FusionStrategy.INTERMEDIATE_ATTENTION,
    FusionStrategy.AUDIO_ONLY,
    FusionStrategy.VIDEO_ONLY,
)


class VideoFrontendConfig(BaseModel):
    input_dim: int = Field(..., ge=1, description="Visual feature dimension C")
    fixed_length: int = Field(..., ge=1, description="Token count L after temporal downsampling")
    embed_dim: int = Field(..., ge=1, description="Embedding dimension D")
    num_blocks: int = Field(..., ge=1, description="Number of self-attention blocks N")
    num_heads: int = Field(..., ge=1)
    mlp_hidden: int = Field(..., ge=1)
    kernel: int = Field(3, ge=1, description="Downsampling conv1d kernel size")
    stride: int = Field(1, ge=1)
    padding: int = Field(1, ge=0)
    downsample: bool = Field(True, description="When false the input must already have L steps")
    ln_eps: float = Field(1e-5, gt=0)

    @model_validator(mode="after")
    def _heads_divide_embedding(self):
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        return self

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads


class AudioFrontendConfig(BaseModel):
    input_freq: int = Field(..., ge=1, description="Acoustic feature dimension F")
    target_freq: int = Field(..., ge=1, description="Projected frequency size F'")
    target_time: int = Field(..., ge=1, description="Pooled time size T'")
    patch: Tuple[int, int] = Field(..., description="Patch size (p_f, p_t)")
    stride: Tuple[int, int] = Field(..., description="Patch stride (s_f, s_t)")
    embed_dim: int = Field(..., ge=1)
    num_layers: int = Field(..., ge=1)
    num_heads: int = Field(..., ge=1)
    mlp_hidden: int = Field(..., ge=1)
    base_grid: Tuple[int, int] = Field((12, 101), description="Base positional grid (h_base, w_base)")
    conv_kernel: int = Field(1, ge=1, description="Frequency-projection conv1d kernel (odd, same-length)")
    norm_kind: Literal["channel", "none"] = "channel"
    ln_eps: float = Field(1e-5, gt=0)

    @model_validator(mode="after")
    def _patch_fits(self):
        p_f, p_t = self.patch
        s_f, s_t = self.stride
        if min(p_f, p_t, s_f, s_t) < 1:
            raise ValueError("patch sizes and strides must be >= 1")
        if self.target_freq < p_f or self.target_time < p_t:
            raise ValueError(
                f"patch {self.patch} does not fit projected input {self.target_freq}x{self.target_time}"
            )
        if min(self.base_grid) < 1:
            raise ValueError("base_grid dimensions must be >= 1")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.conv_kernel % 2 == 0:
            raise ValueError("conv_kernel must be odd to keep the time length")
        return self

    @property
    def grid(self) -> Tuple[int, int]:
        h = conv_output_length(self.target_freq, self.patch[0], self.stride[0])
        w = conv_output_length(self.target_time, self.patch[1], self.stride[1])
        return h, w

    @property
    def num_patches(self) -> int:
        h, w = self.grid
        return h * w


class ModelConfig(BaseModel):
    """Every architectural hyperparameter, as a flat key space."""

    fusion: FusionStrategy = Field(FusionStrategy.INTERMEDIATE_TRANSFORMER, description="Fusion strategy tag")
    audio_dim: Optional[int] = Field(None, ge=1, description="Acoustic feature dim F (filled from the dataset)")
    video_dim: Optional[int] = Field(None, ge=1, description="Visual feature dim C (filled from the dataset)")

    embed_dim: int = Field(64, ge=1)
    num_heads: int = Field(4, ge=1)
    mlp_hidden: int = Field(128, ge=1)
    ln_eps: float = Field(1e-5, gt=0)
    init_std: float = Field(0.02, gt=0, description="Std of token and positional initializers")

    video_length: int = Field(32, ge=1)
    video_blocks: int = Field(2, ge=1)
    video_kernel: int = Field(3, ge=1)
    video_stride: int = Field(1, ge=1)
    video_padding: int = Field(1, ge=0)
    video_downsample: bool = True

    audio_freq: int = Field(16, ge=1)
    audio_time: int = Field(16, ge=1)
    patch_freq: int = Field(4, ge=1)
    patch_time: int = Field(4, ge=1)
    stride_freq: int = Field(4, ge=1)
    stride_time: int = Field(4, ge=1)
    audio_layers: int = Field(2, ge=1)
    base_grid_freq: int = Field(12, ge=1)
    base_grid_time: int = Field(101, ge=1)
    audio_kernel: int = Field(1, ge=1)
    audio_norm: Literal["channel", "none"] = "channel"

    fusion_layers: int = Field(2, ge=1, description="Conv1d layers per branch before fusion")
    fusion_kernel: int = Field(3, ge=1, description="Fusion conv1d kernel (odd, same-length)")

    @model_validator(mode="after")
    def _check(self):
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.fusion_kernel % 2 == 0:
            raise ValueError("fusion_kernel must be odd")
        if self.audio_freq < self.patch_freq or self.audio_time < self.patch_time:
            raise ValueError("audio patch larger than the projected spectrogram")
        return self

    def with_dims(self, audio_dim: int, video_dim: int) -> "ModelConfig":
        return self.model_copy(update={"audio_dim": audio_dim, "video_dim": video_dim})

    def video_frontend(self) -> VideoFrontendConfig:
        if self.video_dim is None:
            raise ValueError("video_dim is unset; call with_dims() with the dataset's feature dims")
        return VideoFrontendConfig(
            input_dim=self.video_dim,
            fixed_length=self.video_length,
            embed_dim=self.embed_dim,
            num_blocks=self.video_blocks,
            num_heads=self.num_heads,
            mlp_hidden=self.mlp_hidden,
            kernel=self.video_kernel,
            stride=self.video_stride,
            padding=self.video_padding,
            downsample=self.video_downsample,
            ln_eps=self.ln_eps,
        )

    def audio_frontend(self) -> AudioFrontendConfig:
        if self.audio_dim is None:
            raise ValueError("audio_dim is unset; call with_dims() with the dataset's feature dims")
        return AudioFrontendConfig(
            input_freq=self.audio_dim,
            target_freq=self.audio_freq,
            target_time=self.audio_time,
            patch=(self.patch_freq, self.patch_time),
            stride=(self.stride_freq, self.stride_time),
            embed_dim=self.embed_dim,
            num_layers=self.audio_layers,
            num_heads=self.num_heads,
            mlp_hidden=self.mlp_hidden,
            base_grid=(self.base_grid_freq, self.base_grid_time),
            conv_kernel=self.audio_kernel,
            norm_kind=self.audio_norm,
            ln_eps=self.ln_eps,
        )
