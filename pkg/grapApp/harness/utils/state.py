import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, TypedDict, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from grapApp.errors import ConfigError
from grapApp.model import CompositeModel
from grapApp.tasks import TaskSpec
from grapApp.tuner import NormalizationMode

FLOAT_FORMAT = "%.17g"

MethodName = Literal["equal", "grap", "gradnorm", "dwa", "mgda", "pcgrad", "fixed"]

# ===== PYDANTIC MODELS (Run configuration) =====


class ModelSpec(BaseModel):
    """Backbone and head architecture"""

    model_config = ConfigDict(extra="forbid")

    hidden: List[int] = Field(default_factory=lambda: [32])
    activation: Literal["tanh", "relu"] = "tanh"
    head_hidden: List[int] = Field(default_factory=list)


class MethodSpec(BaseModel):
    """Weighting method and its hyperparameters"""

    model_config = ConfigDict(extra="forbid")

    name: MethodName = "grap"
    fixed_weights: Optional[List[float]] = None
    normalization: NormalizationMode = Field(default_factory=NormalizationMode)
    lr_w: Optional[float] = Field(None, ge=0.0)  # None -> use the model lr
    floor: float = Field(0.0, ge=0.0)
    # normalize the equal/fixed cotangent the way the grap cotangent is normalized
    normalize_cotangent: bool = False
    gradnorm_alpha: float = Field(1.5, ge=0.0)
    dwa_temperature: float = Field(2.0, gt=0.0)
    dwa_window: int = Field(50, ge=1)
    burn_in: float = Field(0.2, ge=0.0, lt=1.0)

    @model_validator(mode="before")
    @classmethod
    def _parse_fixed_shorthand(cls, data: Any) -> Any:
        # "fixed:1,0.5,0" is accepted wherever a method is expected
        if isinstance(data, str):
            data = {"name": data}
        if isinstance(data, dict) and str(data.get("name", "")).startswith("fixed:"):
            data = dict(data)
            values = data["name"].split(":", 1)[1]
            data["name"] = "fixed"
            data["fixed_weights"] = [float(v) for v in values.split(",") if v.strip()]
        return data

    @model_validator(mode="after")
    def _check_fixed(self) -> "MethodSpec":
        if self.name == "fixed":
            if not self.fixed_weights:
                raise ValueError("method 'fixed' needs fixed_weights")
            if min(self.fixed_weights) < 0 or max(self.fixed_weights) <= 0:
                raise ValueError("fixed weights must be >= 0 with at least one > 0")
        return self


class RunConfig(BaseModel):
    """Everything one training run depends on; unknown keys are rejected"""

    model_config = ConfigDict(extra="forbid")

    task: TaskSpec = Field(default_factory=TaskSpec)
    model: ModelSpec = Field(default_factory=ModelSpec)
    method: MethodSpec = Field(default_factory=MethodSpec)
    lr: float = Field(0.05, gt=0.0)
    head_lr: Optional[float] = Field(None, gt=0.0)
    down_lr: Optional[float] = Field(None, gt=0.0)
    steps: int = Field(1500, gt=0)
    batch_size: Optional[int] = Field(128, ge=1)
    eval_every: int = Field(10, ge=1)
    seed: int = 0
    record_timing: bool = False
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_method_fits_task(self) -> "RunConfig":
        if self.method.name == "fixed" and len(self.method.fixed_weights) != self.task.K:
            raise ValueError(
                f"fixed_weights has {len(self.method.fixed_weights)} entries for K={self.task.K}"
            )
        return self

    @property
    def lr_w(self) -> float:
        return self.lr if self.method.lr_w is None else self.method.lr_w

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        """Same config with both the run seed and the task seed set to ``seed``."""
        return self.model_copy(
            update={"seed": seed, "task": self.task.model_copy(update={"seed": seed})},
            deep=True,
        )

    def to_yaml(self) -> str:
        body = self.model_dump(mode="json")
        body["config_hash"] = self.config_hash()
        return yaml.safe_dump(body, sort_keys=False)


def parse_run_config(data: Optional[Dict[str, Any]]) -> RunConfig:
    data = dict(data or {})
    data.pop("config_hash", None)  # echoed configs may be fed back in
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid run config:\n{exc}") from exc


def load_run_config(path: Union[str, Path]) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    return parse_run_config(raw)


class RunSummary(BaseModel):
    """Headline numbers of one run (one row of summary.csv)"""

    method: str
    seed: int
    labeled_fraction: float
    steps: int
    final_loss_val: float
    final_metric_val: float
    probe_metric_val: float = 0.0  # linear probe on the final frozen embeddings
    median_weights: List[float]
    degenerate_events: int = 0
    mean_step_us: float = 0.0
    config_hash: str

    def to_row(self) -> Dict[str, Any]:
        row = self.model_dump()
        weights = row.pop("median_weights")
        row.update({f"median_w_{k + 1}": w for k, w in enumerate(weights)})
        return row


# ===== TRAJECTORY =====


@dataclass
class Trajectory:
    """Per logged step: weights, losses, downstream numbers, alignment and timing"""

    K: int
    rows: List[Dict[str, float]] = field(default_factory=list)

    @property
    def columns(self) -> List[str]:
        return (
            ["step"]
            + [f"w_{k + 1}" for k in range(self.K)]
            + [f"loss_{k + 1}" for k in range(self.K)]
            + [
                "loss_down_train",
                "loss_down_val",
                "metric_val",
                "cosine",
                "comp_norm",
                "step_us",
            ]
        )

    def append(
        self,
        step: int,
        weights: np.ndarray,
        losses: np.ndarray,
        loss_down_train: float,
        loss_down_val: float,
        metric_val: float,
        cosine: float,
        comp_norm: float,
        step_us: float,
    ) -> None:
        if self.rows and step <= self.rows[-1]["step"]:
            raise ValueError(f"trajectory steps must increase, got {step}")
        row = {"step": int(step)}
        row.update({f"w_{k + 1}": float(w) for k, w in enumerate(weights)})
        row.update({f"loss_{k + 1}": float(v) for k, v in enumerate(losses)})
        row.update(
            loss_down_train=float(loss_down_train),
            loss_down_val=float(loss_down_val),
            metric_val=float(metric_val),
            cosine=float(cosine),
            comp_norm=float(comp_norm),
            step_us=float(step_us),
        )
        self.rows.append(row)

    def weights(self) -> np.ndarray:
        return np.array([[r[f"w_{k + 1}"] for k in range(self.K)] for r in self.rows])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path


@dataclass
class RunResult:
    config: RunConfig
    trajectory: Trajectory
    model: CompositeModel
    summary: RunSummary


# ===== TUNED FLOW STATE (TypedDict for LangGraph) =====


class TunedFlowState(TypedDict, total=False):
    """State of the two-phase tune-then-retrain flow"""

    config: RunConfig
    tune_result: Optional[RunResult]
    median_weights: Optional[List[float]]
    retrain_result: Optional[RunResult]
    error: Optional[str]
    exit_code: Optional[int]  # of the error that stopped the flow
    report: Optional[Dict[str, Any]]
