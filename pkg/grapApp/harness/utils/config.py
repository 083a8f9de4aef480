from typing import Optional

from langchain_core.runnables import RunnableConfig
from pydantic import BaseModel, Field


class Configuration(BaseModel):
    """Runtime options for the tuned flow, passed through RunnableConfig"""

    output_dir: Optional[str] = None  # write both phases' outputs here
    burn_in: Optional[float] = Field(None, ge=0.0, lt=1.0)  # overrides method.burn_in

    @classmethod
    def from_runnable_config(cls, config: Optional[RunnableConfig] = None) -> "Configuration":
        # flow options live under "configurable"; other keys there belong to langgraph
        config = config or {}
        configurable = config.get("configurable", {})
        return cls(**{k: v for k, v in configurable.items() if k in cls.model_fields})
