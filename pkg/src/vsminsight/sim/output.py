"""Result document produced by a simulation run.

The document is organized as named sections, each holding elements that pair
a payload (time series, stat block or single KPI) with a short piece of
domain guidance. Downstream consumers browse section and element names as
metadata and only open payloads explicitly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

from ..errors import SchemaError
from .config import SimulationConfig

# Section identifiers in presentation order.
SECTION_TITLES = {
    "stock_statistics": "Stock Statistics",
    "process_utilization": "Process Utilization",
    "throughput": "Throughput",
    "lead_times": "Lead Times",
    "rework_scrap": "Rework and Scrap",
    "material_flow": "Material Flow",
    "information_flow": "Information Flow",
    "resource_utilization": "Resource Utilization",
    "setup_downtime": "Setup and Downtime",
    "order_fulfillment": "Order Fulfillment",
    "bottleneck_analysis": "Bottleneck Analysis",
}

PAYLOAD_KINDS = ("time_series", "stat_block", "kpi")

_TRAILING_DIGITS = re.compile(r"^(.*?[A-Za-z])(\d+)$")


def element_base_name(node_id: str, taken: set) -> str:
    """Readable element stem for a node id, unique within one output.

    Ids ending in digits get an underscore before the digit run ("S1" becomes
    "S_1") so counters read as indices. On a collision the raw id is used,
    then numbered suffixes.
    """
    match = _TRAILING_DIGITS.match(node_id)
    candidate = f"{match.group(1)}_{match.group(2)}" if match else node_id
    if candidate in taken:
        candidate = node_id
    suffix = 2
    base = candidate
    while candidate in taken:
        candidate = f"{base}_{suffix}"
        suffix += 1
    taken.add(candidate)
    return candidate


@dataclass
class Element:
    name: str
    expert_knowledge: str
    payload_kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "expert_knowledge": self.expert_knowledge,
            "payload_kind": self.payload_kind,
            "payload": self.payload,
        }


@dataclass
class SimulationOutput:
    sections: dict = field(default_factory=dict)  # section_id -> [Element]
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "sections": {sid: [e.to_dict() for e in elements]
                         for sid, elements in self.sections.items()},
            "provenance": self.provenance,
        }

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.to_dict(), sort_keys=True, indent=2,
                           ensure_ascii=False) + "\n").encode("utf-8")

    @classmethod
    def from_dict(cls, raw: dict) -> "SimulationOutput":
        if not isinstance(raw, dict) or set(raw) != {"sections", "provenance"}:
            raise SchemaError("simulation output must have exactly 'sections' and 'provenance'")
        sections_raw = raw["sections"]
        if not isinstance(sections_raw, dict):
            raise SchemaError("'sections' must be an object")
        sections = {}
        for sid, elements_raw in sections_raw.items():
            if sid not in SECTION_TITLES:
                raise SchemaError(f"unknown section id {sid!r}")
            if not isinstance(elements_raw, list):
                raise SchemaError(f"section {sid!r} must hold an array")
            elements = []
            for pos, el in enumerate(elements_raw):
                where = f"section {sid!r} element {pos}"
                if not isinstance(el, dict) or set(el) != {"name", "expert_knowledge", "payload_kind", "payload"}:
                    raise SchemaError(f"{where}: wrong field set")
                if el["payload_kind"] not in PAYLOAD_KINDS:
                    raise SchemaError(f"{where}: unknown payload kind {el['payload_kind']!r}")
                if not isinstance(el["payload"], dict):
                    raise SchemaError(f"{where}: payload must be an object")
                elements.append(Element(name=el["name"], expert_knowledge=el["expert_knowledge"],
                                        payload_kind=el["payload_kind"], payload=el["payload"]))
            sections[sid] = elements
        for sid in SECTION_TITLES:
            if sid not in sections:
                raise SchemaError(f"missing section {sid!r}")
        provenance = raw["provenance"]
        if not isinstance(provenance, dict) or "graph_hash" not in provenance or "config" not in provenance:
            raise SchemaError("'provenance' must carry graph_hash and config")
        return cls(sections=sections, provenance=provenance)

    @classmethod
    def from_json_bytes(cls, data: bytes) -> "SimulationOutput":
        try:
            raw = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SchemaError(f"simulation output is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    def config(self) -> SimulationConfig:
        return SimulationConfig(**self.provenance["config"])


def load_knowledge_templates() -> dict:
    text = resources.files("vsminsight.sim").joinpath("knowledge.json").read_text("utf-8")
    return json.loads(text)


def render_knowledge(templates: dict, key: str, **values) -> str:
    return templates[key].format(**values)
