"""Digital data sheets and skill-level commanding for service robot software.

The package turns declarative component and system descriptions into asset
administration shell environments, serializes them as deterministic ``.aasx``
packages, and serves them over HTTP together with a generic command set
(push / get status / get output / delete) backed by a simulated robot.
"""

__version__ = "0.1.0"

from .commands import CommandRegistry, CommandState, Outcome, TelemetryLedger
from .generate import gen_component_aas, gen_system_aas, refresh_operational_data
from .ingest import ComponentModel, SystemModel, parse_component, parse_system
from .model import AasEnvironment, resolve, validate

__all__ = [
    "AasEnvironment",
    "CommandRegistry",
    "CommandState",
    "ComponentModel",
    "Outcome",
    "SystemModel",
    "TelemetryLedger",
    "gen_component_aas",
    "gen_system_aas",
    "parse_component",
    "parse_system",
    "refresh_operational_data",
    "resolve",
    "validate",
    "__version__",
]
