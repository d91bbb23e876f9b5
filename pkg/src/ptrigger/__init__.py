"""Predictive triggering for multi-agent networked control over a shared bus."""
from .commprob import HorizonParams, m_step_probability, quantize, should_send
from .errors import (
    AccountingError,
    ChecksumError,
    ConfigurationError,
    PTError,
    QueryError,
    SchedulerError,
    TableMismatchError,
)
from .exitprob import ErrorProcessSpec, ExitProbTable, build_exit_table, query_exit_probability
from .lqr import dlqr, solve_dare
from .model import AgentModel, AgentState, FeedbackLaw
from .scheduling import NetworkSpec, Policy, TriggerParams, network_utilization
from .simulation import RunConfig, RunRecord, TableSettings, build_tables, run, sweep

__version__ = "0.1.0"

__all__ = [
    "AccountingError",
    "AgentModel",
    "AgentState",
    "ChecksumError",
    "ConfigurationError",
    "ErrorProcessSpec",
    "ExitProbTable",
    "FeedbackLaw",
    "HorizonParams",
    "NetworkSpec",
    "PTError",
    "Policy",
    "QueryError",
    "RunConfig",
    "RunRecord",
    "SchedulerError",
    "TableMismatchError",
    "TableSettings",
    "TriggerParams",
    "build_exit_table",
    "build_tables",
    "dlqr",
    "m_step_probability",
    "network_utilization",
    "query_exit_probability",
    "quantize",
    "run",
    "should_send",
    "solve_dare",
    "sweep",
]
