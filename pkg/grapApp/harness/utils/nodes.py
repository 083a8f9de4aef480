import logging
from pathlib import Path

from langchain_core.runnables import RunnableConfig

from grapApp.errors import GrapError
from grapApp.harness.runner import run, write_outputs
from grapApp.harness.utils.config import Configuration
from grapApp.harness.utils.state import MethodSpec, TunedFlowState
from grapApp.tuner import median_weights

logger = logging.getLogger(__name__)


# --- NODE 1: TUNE WEIGHTS ---
def tune_weights(state: TunedFlowState):
    """
    Phase one: online weight tuning with grap.
    """
    config = state["config"]
    if config.method.name != "grap":
        method = config.method.model_copy(update={"name": "grap", "fixed_weights": None})
        config = config.model_copy(update={"method": method})
    try:
        return {"tune_result": run(config), "error": None, "exit_code": None}
    except GrapError as exc:
        logger.error("tuning phase failed: %s", exc)
        return {"tune_result": None, "error": str(exc), "exit_code": exc.exit_code}


# --- NODE 2: EXTRACT MEDIAN WEIGHTS ---
def extract_median(state: TunedFlowState, config: RunnableConfig):
    """
    Coordinate-wise median of the tuned weights after burn-in.
    """
    options = Configuration.from_runnable_config(config)
    result = state["tune_result"]
    burn_in = options.burn_in
    if burn_in is None:
        burn_in = result.config.method.burn_in
    weights = median_weights(result.trajectory.weights(), burn_in)
    if not (weights > 0).any():
        # a fixed run needs one positive weight; fall back to uniform
        logger.warning("median weights are all zero, retraining with uniform weights")
        weights = weights * 0.0 + 1.0
    return {"median_weights": weights.tolist()}


# --- NODE 3: RETRAIN WITH FIXED WEIGHTS ---
def retrain_fixed(state: TunedFlowState):
    """
    Phase two: retrain from scratch with the median weights held fixed.
    """
    config = state["config"]
    method = MethodSpec(
        **{
            **config.method.model_dump(),
            "name": "fixed",
            "fixed_weights": state["median_weights"],
        }
    )
    try:
        result = run(config.model_copy(update={"method": method}))
        return {"retrain_result": result}
    except GrapError as exc:
        logger.error("retraining phase failed: %s", exc)
        return {"retrain_result": None, "error": str(exc), "exit_code": exc.exit_code}


# --- NODE 4: WRITE REPORT ---
def write_report(state: TunedFlowState, config: RunnableConfig):
    """
    Collects both phases' summaries and writes their outputs if asked to.
    """
    options = Configuration.from_runnable_config(config)
    report = {
        "error": state.get("error"),
        "exit_code": state.get("exit_code"),
        "median_weights": state.get("median_weights"),
    }
    for phase in ("tune", "retrain"):
        result = state.get(f"{phase}_result")
        if result is None:
            continue
        report[phase] = result.summary.model_dump()
        if options.output_dir:
            write_outputs(result, Path(options.output_dir) / phase)
    return {"report": report}
