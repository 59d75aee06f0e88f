from .envelope import FinalAnswer, ToolCall, parse_envelope
from .runtime import (
    AgentAnswer,
    AgentConfig,
    AgentStep,
    IsolationMonitor,
    dispatch_tool,
    run_orchestrator,
    run_subworkflow,
)

__all__ = [
    "FinalAnswer",
    "ToolCall",
    "parse_envelope",
    "AgentAnswer",
    "AgentConfig",
    "AgentStep",
    "IsolationMonitor",
    "dispatch_tool",
    "run_orchestrator",
    "run_subworkflow",
]
