"""Two-node runtime: transports, protocol messages and the epoch loop."""
from .config import (CountModulation, DetectorBank, EncodingGrid, QkdSettings, Routing, ScenarioConfig,
                     TwttSettings)
from .scenario import EpochRecord, ScenarioReport, compress, run_scenario
from .transport import FaultPlan, TransportError, make_link
