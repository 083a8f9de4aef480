"""
LangGraph StateGraph for the two-phase Tuned flow

Graph Flow:
1. tune_weights -> Routes to extract_median or write_report (on failure)
2. extract_median -> retrain_fixed
3. retrain_fixed -> write_report
4. write_report -> END
"""

from langgraph.graph import END, StateGraph

from grapApp.harness.utils.nodes import (
    extract_median,
    retrain_fixed,
    tune_weights,
    write_report,
)
from grapApp.harness.utils.state import TunedFlowState


# ============================================================================
# CONDITIONAL EDGE FUNCTIONS
# ============================================================================


def route_after_tuning(state: TunedFlowState) -> str:
    """
    Route based on the outcome of the tuning phase.

    Returns:
        "extract_median" if the grap run finished
        "write_report" if it failed (the error goes into the report)
    """
    if state.get("error") or state.get("tune_result") is None:
        return "write_report"
    return "extract_median"


# ============================================================================
# GRAPH CONSTRUCTION
# ============================================================================


def create_tuned_flow_graph():
    """
    Constructs the tune-then-retrain StateGraph.

    Graph Structure:
        START
          |
        tune_weights
          |- success -> extract_median -> retrain_fixed -> write_report
          |- failure -> write_report
          |
        END

    Returns:
        Compiled StateGraph ready for execution
    """
    graph = StateGraph(TunedFlowState)

    graph.add_node("tune_weights", tune_weights)
    graph.add_node("extract_median", extract_median)
    graph.add_node("retrain_fixed", retrain_fixed)
    graph.add_node("write_report", write_report)

    graph.set_entry_point("tune_weights")

    graph.add_conditional_edges(
        "tune_weights",
        route_after_tuning,
        {
            "extract_median": "extract_median",
            "write_report": "write_report",
        },
    )

    graph.add_edge("extract_median", "retrain_fixed")
    graph.add_edge("retrain_fixed", "write_report")
    graph.add_edge("write_report", END)

    return graph.compile()


# ============================================================================
# EXPORT
# ============================================================================

tuned_flow = create_tuned_flow_graph()


def run_tuned(config, output_dir=None, burn_in=None):
    """Runs the flow for ``config`` and returns the final state."""
    configurable = {"output_dir": output_dir, "burn_in": burn_in}
    return tuned_flow.invoke({"config": config}, config={"configurable": configurable})
