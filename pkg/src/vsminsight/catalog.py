"""Metadata-first access to a simulation context.

A context pairs a validated graph with the simulation output produced from
it. Browsing is split in two privilege levels on purpose: section and
element listings plus graph structure are plain metadata anyone may read,
while element payloads require a capability token minted for the specific
context. Code paths that were never handed the capability cannot read
payload data, which is what keeps raw numbers out of the orchestration
layer.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import (
    CapabilityError,
    ContextMismatch,
    UnknownElement,
    UnknownSection,
)
from .model import VsmGraph, graph_hash, parse_vsm
from .sim.output import SECTION_TITLES, Element, SimulationOutput


@dataclass(frozen=True)
class ElementListing:
    """What a browser may see about an element: its name and the domain
    guidance attached to it. Never the payload."""

    name: str
    expert_knowledge: str


@dataclass(frozen=True)
class PayloadCapability:
    """Bearer token for payload reads, bound to one context."""

    context_id: str
    nonce: str


class ContextHandle:
    def __init__(self, context_id: str, graph: VsmGraph, output: SimulationOutput):
        recorded = output.provenance.get("graph_hash")
        actual = graph_hash(graph)
        if recorded != actual:
            raise ContextMismatch(
                f"simulation output was produced from graph {recorded}, "
                f"but this graph hashes to {actual}")
        self.context_id = context_id
        self.graph = graph
        self.output = output

    # -- metadata level ------------------------------------------------------

    def list_sections(self) -> list:
        return [{"id": sid, "title": SECTION_TITLES[sid],
                 "element_count": len(self.output.sections[sid])}
                for sid in SECTION_TITLES]

    def list_elements(self, section_id: str) -> list:
        if section_id not in self.output.sections:
            raise UnknownSection(f"no section {section_id!r}; "
                                 f"known: {', '.join(SECTION_TITLES)}")
        return [ElementListing(name=el.name, expert_knowledge=el.expert_knowledge)
                for el in self.output.sections[section_id]]

    # -- payload level ---------------------------------------------------------

    def mint_capability(self) -> PayloadCapability:
        return PayloadCapability(context_id=self.context_id, nonce=secrets.token_hex(8))

    def get_element(self, name: str,
                    capability: Optional[PayloadCapability]) -> Element:
        """Element by name, searched across all sections (names are unique
        per output). The capability gate is what separates this from the
        metadata surface."""
        if not isinstance(capability, PayloadCapability):
            raise CapabilityError("payload access requires a capability token")
        if capability.context_id != self.context_id:
            raise CapabilityError(
                f"capability was minted for context {capability.context_id!r}, "
                f"not {self.context_id!r}")
        for sid in self.output.sections:
            for el in self.output.sections[sid]:
                if el.name == name:
                    return el
        raise UnknownElement(f"no element named {name!r} in any section")


# -- on-disk layout: <dir>/vsm.json + <dir>/simulation.json -------------------


def save_context(directory, vsm_document: bytes, output: SimulationOutput):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "vsm.json").write_bytes(vsm_document)
    (directory / "simulation.json").write_bytes(output.to_json_bytes())


def load_context(directory, context_id: Optional[str] = None) -> ContextHandle:
    directory = Path(directory)
    graph = parse_vsm((directory / "vsm.json").read_bytes())
    output = SimulationOutput.from_json_bytes((directory / "simulation.json").read_bytes())
    return ContextHandle(context_id or directory.name, graph, output)


def context_summary(handle: ContextHandle) -> dict:
    """One-screen metadata digest: node census plus section sizes."""
    kinds = {}
    for node in handle.graph.nodes:
        kinds[node.kind.value] = kinds.get(node.kind.value, 0) + 1
    return {
        "context_id": handle.context_id,
        "graph_hash": handle.output.provenance["graph_hash"],
        "products": list(handle.graph.products),
        "node_kinds": kinds,
        "sections": {s["id"]: s["element_count"] for s in handle.list_sections()},
    }
