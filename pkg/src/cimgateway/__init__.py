"""CIM compliant cloud SCADA gateway.

Topology comes in as CIM/XML/RDF, the class library as XMI; storage schema,
tag mapping, live sync and the operator UI configuration all rederive from
those two inputs on every change.
"""

from .cim_library import CimLibrary, PrimitiveKind, TagNameMap, load_library
from .gateway import GatewayService
from .id_sync import MappingTable, Quality, RefreshPolicy, build_mapping
from .local_sim import Scenario, SimulatorNode, load_scenario
from .rdf_topology import TopologyDocument, parse_topology, serialize_topology, validate
from .schema_synth import StorageCatalog, detect_drift, plan_schema
from .storage import SqliteStore

__version__ = "0.1.0"

__all__ = [
    "CimLibrary",
    "GatewayService",
    "MappingTable",
    "PrimitiveKind",
    "Quality",
    "RefreshPolicy",
    "Scenario",
    "SimulatorNode",
    "SqliteStore",
    "StorageCatalog",
    "TagNameMap",
    "TopologyDocument",
    "build_mapping",
    "detect_drift",
    "load_library",
    "load_scenario",
    "parse_topology",
    "plan_schema",
    "serialize_topology",
    "validate",
    "__version__",
]
