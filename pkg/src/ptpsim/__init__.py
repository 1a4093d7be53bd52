"""Path-specified multipath transport over named-data forwarding, simulated."""

from .names import (
    ContentName,
    Data,
    EMPTY_TAG,
    EmptyTagError,
    FlowName,
    Interest,
    MalformedNameError,
    Nack,
    NackReason,
    Tag,
    flow_name_of,
)
from .fib import Fib, FibEntry, FabTable, resolve
from .forwarder import ContentStore, Producer, Router
from .mpccp import (
    Consumer,
    PathStatus,
    Phase,
    TransportConfig,
    coupling_alpha,
    linked_increase_increment,
)
from .netsim import ConfigError, EventLoop, Link, Node, Topology
from .config import Scenario, World, build_world, parse_scenario
from .metrics import MetricsReport, Recorder, evaluate_checks
from .harness import BUILTIN_NAMES, RunResult, load_scenario, run_scenario

__version__ = "0.1.0"
