"""Capacity, delay and two-hop relay simulation for intermittently connected mobile networks."""

from ._backend import NAME as BACKEND
from .errors import (
    ConfigurationError,
    ICMNError,
    InstabilityError,
    LowSampleWarning,
    ParameterError,
    TraceParseError,
)
from .meeting import (
    MeetingEvent,
    MeetingSchedule,
    NetworkParams,
    generate_schedule,
    read_schedule,
    sample_inter_meeting,
    total_meeting_rate,
    write_schedule,
)
from .routing import (
    NodeState,
    Outcome,
    Packet,
    SimulationStats,
    TrafficParams,
    handle_meeting,
    measured_throughput,
    sample_derangement,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigurationError",
    "ICMNError",
    "InstabilityError",
    "LowSampleWarning",
    "MeetingEvent",
    "MeetingSchedule",
    "NetworkParams",
    "NodeState",
    "Outcome",
    "Packet",
    "ParameterError",
    "SimulationStats",
    "TraceParseError",
    "TrafficParams",
    "generate_schedule",
    "handle_meeting",
    "measured_throughput",
    "read_schedule",
    "sample_derangement",
    "sample_inter_meeting",
    "simulate",
    "total_meeting_rate",
    "write_schedule",
]
