"""Request and response bodies for the pipeline service.

All heavy data stays on disk; requests reference input files by path
and name the outputs to produce, so the same schema works for the
in-process transport the CLI uses and for a long-running server on a
shared filesystem.  Pipeline tunables travel as the flat key=value
mapping understood by the config layer.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class RectSpec(BaseModel):
    x0: int
    y0: int
    width: int
    height: int
    disparity: int


class SynthRequest(BaseModel):
    out_dir: str
    prefix: str = "pair"
    width: int = 160
    height: int = 120
    d_max: int = 16
    d_bg: int = 0
    rects: list[RectSpec] = Field(default_factory=list)
    noise_sigma: float = 0.0
    gain: float = 1.0
    seed: int = 0


class SynthResponse(BaseModel):
    left: str
    right: str
    gt: str
    occlusion: str


class TrainPair(BaseModel):
    left: str
    right: str
    gt: str


class TrainRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    pairs: list[TrainPair]
    model_out: str
    config: dict[str, str] = Field(default_factory=dict)
    threads: int = 1


class TrainSummary(BaseModel):
    n_pairs: int
    n_samples: int
    n_positive: int
    n_negative: int
    negatives_per_positive: float
    training_accuracy: float
    swap_augment: bool


class TrainResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_path: str
    summary: TrainSummary


class PredictRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    left: str
    right: str
    model: str
    out_prefix: str
    config: dict[str, str] = Field(default_factory=dict)
    skip_optimization: bool = False
    dump_cbmv: str | None = None
    dump_stages: str | None = None


class PredictResponse(BaseModel):
    pfm: str
    png: str
    cbmv_dump: str | None = None
    stages_dir: str | None = None


class EvalRequest(BaseModel):
    pred: str
    gt: str
    mask: str | None = None


class EvalResponse(BaseModel):
    mask_kind: str
    pixel_count: int
    bad: dict[str, float]
    avg_err: float
    rms_err: float
    text: str
    block: str


class FeaturesRequest(BaseModel):
    left: str
    right: str
    out: str
    config: dict[str, str] = Field(default_factory=dict)


class FeaturesResponse(BaseModel):
    features: str
    height: int
    width: int
    d_max: int
