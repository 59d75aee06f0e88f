"""Attributed-graph model of a value stream map.

Nodes are logistical entities (suppliers, processes, stores, customers,
production control), edges carry material or information flow. The graph is
immutable after parsing and is the static half of every analysis context.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional, Union

from .canon import canonical_json_bytes, fnv1a64_hex
from .errors import SchemaError, UnknownNode, ValidationError, VsmSyntaxError


class NodeKind(enum.Enum):
    SUPPLIER = "supplier"
    CUSTOMER = "customer"
    PROCESS = "process"
    WAREHOUSE = "warehouse"
    SUPERMARKET = "supermarket"
    PRODUCTION_CONTROL = "production_control"


class EdgeKind(enum.Enum):
    MATERIAL = "material"
    INFORMATION = "information"


STORAGE_KINDS = (NodeKind.WAREHOUSE, NodeKind.SUPERMARKET)


@dataclass(frozen=True)
class ProcessAttributes:
    """Per-product cycle times plus setup, failure and quality parameters."""

    cycle_time_s: dict = field(default_factory=dict)  # product -> seconds per part
    setup_time_s: int = 0
    workers: int = 1
    repair_duration_s: int = 0
    mean_time_between_failures_s: int = 0  # 0 disables breakdowns
    rework_fraction: float = 0.0
    scrap_fraction: float = 0.0


@dataclass(frozen=True)
class StorageAttributes:
    """Warehouse / supermarket stock limits and levels, per product."""

    max_capacity_parts: Optional[int] = None
    safety_stock_parts: dict = field(default_factory=dict)
    initial_stock_parts: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CustomerAttributes:
    demand_rate: dict = field(default_factory=dict)  # product -> parts per hour
    demand_interval_s: Optional[int] = None


@dataclass(frozen=True)
class SupplierAttributes:
    replenishment_batch_parts: dict = field(default_factory=dict)
    replenishment_interval_s: Optional[int] = None


@dataclass(frozen=True)
class ControlAttributes:
    """Production control carries no parameters beyond its identity."""


AttributeSet = Union[
    ProcessAttributes,
    StorageAttributes,
    CustomerAttributes,
    SupplierAttributes,
    ControlAttributes,
]

_ATTRIBUTE_CLASS = {
    NodeKind.PROCESS: ProcessAttributes,
    NodeKind.WAREHOUSE: StorageAttributes,
    NodeKind.SUPERMARKET: StorageAttributes,
    NodeKind.CUSTOMER: CustomerAttributes,
    NodeKind.SUPPLIER: SupplierAttributes,
    NodeKind.PRODUCTION_CONTROL: ControlAttributes,
}


@dataclass(frozen=True)
class Node:
    id: str
    display_name: str
    kind: NodeKind
    attributes: AttributeSet


@dataclass(frozen=True)
class Edge:
    from_id: str
    to_id: str
    kind: EdgeKind
    products: tuple = ()  # material only, document order
    transfer_time_s: int = 0
    batch_size_parts: int = 1  # material only

    def label(self) -> str:
        return f"{self.from_id}->{self.to_id}[{self.kind.value}]"


@dataclass
class VsmGraph:
    """Immutable after construction; equality ignores the derived index."""

    nodes: tuple
    edges: tuple
    products: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._index = {n.id: n for n in self.nodes}

    def node(self, node_id: str) -> Node:
        try:
            return self._index[node_id]
        except KeyError:
            raise UnknownNode(f"no node with id {node_id!r}") from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._index


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    message: str

    def __str__(self):
        return f"[{self.rule}] {self.subject}: {self.message}"


# Rule identifiers used by validate_topology.
DANGLING_ENDPOINT = "DANGLING_ENDPOINT"
EDGE_LEGALITY = "EDGE_LEGALITY"
DUPLICATE_NODE_ID = "DUPLICATE_NODE_ID"
EMPTY_NODE_ID = "EMPTY_NODE_ID"
MATERIAL_PRODUCTS_EMPTY = "MATERIAL_PRODUCTS_EMPTY"
UNKNOWN_PRODUCT = "UNKNOWN_PRODUCT"
SUPPLIER_NO_MATERIAL_OUT = "SUPPLIER_NO_MATERIAL_OUT"
CUSTOMER_NO_MATERIAL_IN = "CUSTOMER_NO_MATERIAL_IN"
ATTRIBUTE_RANGE = "ATTRIBUTE_RANGE"
CAPACITY_CONFLICT = "CAPACITY_CONFLICT"


def _legal_edge_set():
    """Allowed (from kind, to kind, edge kind) triples.

    Material may flow supplier -> {process, store}, process -> {process,
    store, customer} and store -> {process, customer}; information flows
    customer -> production control -> {process, supplier}. Everything else
    is illegal, so the table is total over all kind combinations.
    """
    legal = set()
    store = [NodeKind.WAREHOUSE, NodeKind.SUPERMARKET]
    for dst in [NodeKind.PROCESS, *store]:
        legal.add((NodeKind.SUPPLIER, dst, EdgeKind.MATERIAL))
    for dst in [NodeKind.PROCESS, *store, NodeKind.CUSTOMER]:
        legal.add((NodeKind.PROCESS, dst, EdgeKind.MATERIAL))
    for src in store:
        for dst in [NodeKind.PROCESS, NodeKind.CUSTOMER]:
            legal.add((src, dst, EdgeKind.MATERIAL))
    legal.add((NodeKind.CUSTOMER, NodeKind.PRODUCTION_CONTROL, EdgeKind.INFORMATION))
    legal.add((NodeKind.PRODUCTION_CONTROL, NodeKind.PROCESS, EdgeKind.INFORMATION))
    legal.add((NodeKind.PRODUCTION_CONTROL, NodeKind.SUPPLIER, EdgeKind.INFORMATION))
    return frozenset(legal)


LEGAL_EDGES = _legal_edge_set()


def edge_is_legal(from_kind: NodeKind, to_kind: NodeKind, edge_kind: EdgeKind) -> bool:
    return (from_kind, to_kind, edge_kind) in LEGAL_EDGES


# --- parsing --------------------------------------------------------------

_TOP_LEVEL_KEYS = {"products", "nodes", "edges"}
_NODE_KEYS = {"id", "name", "kind", "attributes"}
_EDGE_KEYS = {"from", "to", "kind", "products", "transfer_time_s", "batch_size_parts"}


def _require(condition, message):
    if not condition:
        raise SchemaError(message)


def _as_duration(value, where):
    """Accept integers and integral floats; durations are whole seconds."""
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{where}: expected a number, got {value!r}")
    if isinstance(value, float):
        _require(value.is_integer(), f"{where}: durations must be whole seconds, got {value!r}")
        value = int(value)
    return value


def _as_int(value, where):
    _require(isinstance(value, int) and not isinstance(value, bool),
             f"{where}: expected an integer, got {value!r}")
    return value


def _as_number(value, where):
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{where}: expected a number, got {value!r}")
    return float(value)


def _as_product_map(value, where, value_parser):
    _require(isinstance(value, dict), f"{where}: expected an object keyed by product id")
    out = {}
    for product, v in value.items():
        _require(isinstance(product, str) and product, f"{where}: product ids must be non-empty strings")
        out[product] = value_parser(v, f"{where}[{product}]")
    return out


def _parse_attributes(kind: NodeKind, raw: dict, node_id: str) -> AttributeSet:
    where = f"node {node_id!r} attributes"
    _require(isinstance(raw, dict), f"{where}: expected an object")
    known: dict
    if kind is NodeKind.PROCESS:
        known = {
            "cycle_time_s": lambda v: _as_product_map(v, where, _as_duration),
            "setup_time_s": lambda v: _as_duration(v, f"{where}.setup_time_s"),
            "workers": lambda v: _as_int(v, f"{where}.workers"),
            "repair_duration_s": lambda v: _as_duration(v, f"{where}.repair_duration_s"),
            "mean_time_between_failures_s": lambda v: _as_duration(v, f"{where}.mean_time_between_failures_s"),
            "rework_fraction": lambda v: _as_number(v, f"{where}.rework_fraction"),
            "scrap_fraction": lambda v: _as_number(v, f"{where}.scrap_fraction"),
        }
        cls = ProcessAttributes
    elif kind in STORAGE_KINDS:
        known = {
            "max_capacity_parts": lambda v: None if v is None else _as_int(v, f"{where}.max_capacity_parts"),
            "safety_stock_parts": lambda v: _as_product_map(v, where, _as_int),
            "initial_stock_parts": lambda v: _as_product_map(v, where, _as_int),
        }
        cls = StorageAttributes
    elif kind is NodeKind.CUSTOMER:
        known = {
            "demand_rate": lambda v: _as_product_map(v, where, _as_number),
            "demand_interval_s": lambda v: None if v is None else _as_duration(v, f"{where}.demand_interval_s"),
        }
        cls = CustomerAttributes
    elif kind is NodeKind.SUPPLIER:
        known = {
            "replenishment_batch_parts": lambda v: _as_product_map(v, where, _as_int),
            "replenishment_interval_s": lambda v: None if v is None else _as_duration(v, f"{where}.replenishment_interval_s"),
        }
        cls = SupplierAttributes
    else:
        known = {}
        cls = ControlAttributes

    unknown = set(raw) - set(known)
    _require(not unknown, f"{where}: unknown field(s) {sorted(unknown)} for kind {kind.value!r}")
    parsed = {key: parser(raw[key]) for key, parser in known.items() if key in raw}
    return cls(**parsed)


def _parse_node(raw: dict, position: int) -> Node:
    _require(isinstance(raw, dict), f"nodes[{position}]: expected an object")
    unknown = set(raw) - _NODE_KEYS
    _require(not unknown, f"nodes[{position}]: unknown field(s) {sorted(unknown)}")
    for key in ("id", "name", "kind"):
        _require(key in raw, f"nodes[{position}]: missing {key!r}")
    _require(isinstance(raw["id"], str), f"nodes[{position}]: id must be a string")
    _require(isinstance(raw["name"], str), f"nodes[{position}]: name must be a string")
    try:
        kind = NodeKind(raw["kind"])
    except ValueError:
        raise SchemaError(f"nodes[{position}]: unknown node kind {raw['kind']!r}") from None
    attributes = _parse_attributes(kind, raw.get("attributes", {}), raw["id"])
    return Node(id=raw["id"], display_name=raw["name"], kind=kind, attributes=attributes)


def _parse_edge(raw: dict, position: int) -> Edge:
    _require(isinstance(raw, dict), f"edges[{position}]: expected an object")
    unknown = set(raw) - _EDGE_KEYS
    _require(not unknown, f"edges[{position}]: unknown field(s) {sorted(unknown)}")
    for key in ("from", "to", "kind", "transfer_time_s"):
        _require(key in raw, f"edges[{position}]: missing {key!r}")
    _require(isinstance(raw["from"], str) and isinstance(raw["to"], str),
             f"edges[{position}]: endpoints must be strings")
    try:
        kind = EdgeKind(raw["kind"])
    except ValueError:
        raise SchemaError(f"edges[{position}]: unknown edge kind {raw['kind']!r}") from None
    transfer = _as_duration(raw["transfer_time_s"], f"edges[{position}].transfer_time_s")
    if kind is EdgeKind.INFORMATION:
        _require("products" not in raw and "batch_size_parts" not in raw,
                 f"edges[{position}]: information edges carry no products or batch size")
        return Edge(from_id=raw["from"], to_id=raw["to"], kind=kind, transfer_time_s=transfer)
    products = raw.get("products", [])
    _require(isinstance(products, list) and all(isinstance(p, str) for p in products),
             f"edges[{position}]: products must be an array of strings")
    _require(len(products) == len(set(products)), f"edges[{position}]: duplicate products")
    batch = raw.get("batch_size_parts", 1)
    batch = _as_int(batch, f"edges[{position}].batch_size_parts")
    return Edge(from_id=raw["from"], to_id=raw["to"], kind=kind,
                products=tuple(products), transfer_time_s=transfer, batch_size_parts=batch)


def parse_vsm(document) -> VsmGraph:
    """Parse a VSM document (bytes or str of UTF-8 JSON) into a validated graph.

    Raises VsmSyntaxError for broken JSON, SchemaError for unknown kinds or
    fields, and ValidationError (naming the offending elements) when the
    parsed graph breaks an invariant.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise VsmSyntaxError(f"document is not valid UTF-8: {exc}") from None
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise VsmSyntaxError(f"document is not valid JSON: {exc}") from None

    _require(isinstance(raw, dict), "top level must be a JSON object")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    _require(not unknown, f"unknown top-level key(s) {sorted(unknown)}")
    for key in _TOP_LEVEL_KEYS:
        _require(key in raw, f"missing top-level key {key!r}")

    products = raw["products"]
    _require(isinstance(products, list) and all(isinstance(p, str) and p for p in products),
             "products must be an array of non-empty strings")
    _require(len(products) == len(set(products)), "duplicate product ids")
    _require(isinstance(raw["nodes"], list), "nodes must be an array")
    _require(isinstance(raw["edges"], list), "edges must be an array")

    nodes = tuple(_parse_node(n, i) for i, n in enumerate(raw["nodes"]))
    edges = tuple(_parse_edge(e, i) for i, e in enumerate(raw["edges"]))
    graph = VsmGraph(nodes=nodes, edges=edges, products=tuple(products))

    violations = validate_topology(graph)
    if violations:
        raise ValidationError(violations)
    return graph


def serialize_vsm(graph: VsmGraph) -> dict:
    """Inverse of parse_vsm: a dict that round-trips to an equal graph."""
    nodes = []
    for n in graph.nodes:
        attrs = {}
        a = n.attributes
        if isinstance(a, ProcessAttributes):
            attrs = {
                "cycle_time_s": dict(a.cycle_time_s),
                "setup_time_s": a.setup_time_s,
                "workers": a.workers,
                "repair_duration_s": a.repair_duration_s,
                "mean_time_between_failures_s": a.mean_time_between_failures_s,
                "rework_fraction": a.rework_fraction,
                "scrap_fraction": a.scrap_fraction,
            }
        elif isinstance(a, StorageAttributes):
            attrs = {
                "safety_stock_parts": dict(a.safety_stock_parts),
                "initial_stock_parts": dict(a.initial_stock_parts),
            }
            if a.max_capacity_parts is not None:
                attrs["max_capacity_parts"] = a.max_capacity_parts
        elif isinstance(a, CustomerAttributes):
            attrs = {"demand_rate": dict(a.demand_rate)}
            if a.demand_interval_s is not None:
                attrs["demand_interval_s"] = a.demand_interval_s
        elif isinstance(a, SupplierAttributes):
            attrs = {"replenishment_batch_parts": dict(a.replenishment_batch_parts)}
            if a.replenishment_interval_s is not None:
                attrs["replenishment_interval_s"] = a.replenishment_interval_s
        nodes.append({"id": n.id, "name": n.display_name, "kind": n.kind.value, "attributes": attrs})

    edges = []
    for e in graph.edges:
        doc = {"from": e.from_id, "to": e.to_id, "kind": e.kind.value, "transfer_time_s": e.transfer_time_s}
        if e.kind is EdgeKind.MATERIAL:
            doc["products"] = list(e.products)
            doc["batch_size_parts"] = e.batch_size_parts
        edges.append(doc)

    return {"products": list(graph.products), "nodes": nodes, "edges": edges}


def graph_hash(graph: VsmGraph) -> str:
    """64-bit FNV-1a over the canonical serialization, lowercase hex."""
    return fnv1a64_hex(canonical_json_bytes(serialize_vsm(graph)))


# --- validation -----------------------------------------------------------


def _attribute_violations(node: Node) -> list:
    out = []
    a = node.attributes
    subject = f"node {node.id}"

    def bad(message):
        out.append(Violation(ATTRIBUTE_RANGE, subject, message))

    if isinstance(a, ProcessAttributes):
        for product, ct in a.cycle_time_s.items():
            if ct < 0:
                bad(f"cycle_time_s[{product}] must be >= 0")
        if a.setup_time_s < 0:
            bad("setup_time_s must be >= 0")
        if a.workers < 1:
            bad("workers must be >= 1")
        if a.repair_duration_s < 0:
            bad("repair_duration_s must be >= 0")
        if a.mean_time_between_failures_s < 0:
            bad("mean_time_between_failures_s must be >= 0")
        if not 0.0 <= a.rework_fraction <= 1.0:
            bad("rework_fraction must be in [0, 1]")
        if not 0.0 <= a.scrap_fraction <= 1.0:
            bad("scrap_fraction must be in [0, 1]")
        if a.rework_fraction + a.scrap_fraction > 1.0:
            bad("rework_fraction + scrap_fraction must not exceed 1")
        if a.mean_time_between_failures_s > 0 and a.repair_duration_s == 0:
            bad("repair_duration_s must be > 0 when breakdowns are enabled")
    elif isinstance(a, StorageAttributes):
        if a.max_capacity_parts is not None and a.max_capacity_parts < 0:
            bad("max_capacity_parts must be >= 0")
        for product, v in a.safety_stock_parts.items():
            if v < 0:
                bad(f"safety_stock_parts[{product}] must be >= 0")
        for product, v in a.initial_stock_parts.items():
            if v < 0:
                bad(f"initial_stock_parts[{product}] must be >= 0")
        if a.max_capacity_parts is not None:
            # capacity is a per-product ceiling
            for product, v in a.safety_stock_parts.items():
                if v > a.max_capacity_parts:
                    out.append(Violation(CAPACITY_CONFLICT, subject,
                                         f"safety_stock_parts[{product}]={v} exceeds max_capacity_parts={a.max_capacity_parts}"))
            for product, v in a.initial_stock_parts.items():
                if v > a.max_capacity_parts:
                    out.append(Violation(CAPACITY_CONFLICT, subject,
                                         f"initial_stock_parts[{product}]={v} exceeds max_capacity_parts={a.max_capacity_parts}"))
    elif isinstance(a, CustomerAttributes):
        for product, rate in a.demand_rate.items():
            if rate < 0:
                bad(f"demand_rate[{product}] must be >= 0")
        if a.demand_interval_s is not None and a.demand_interval_s <= 0:
            bad("demand_interval_s must be > 0")
        if a.demand_rate and a.demand_interval_s is None:
            bad("demand_interval_s is required when demand_rate is set")
    elif isinstance(a, SupplierAttributes):
        for product, batch in a.replenishment_batch_parts.items():
            if batch < 1:
                bad(f"replenishment_batch_parts[{product}] must be >= 1")
        if a.replenishment_interval_s is not None and a.replenishment_interval_s <= 0:
            bad("replenishment_interval_s must be > 0")
        if a.replenishment_batch_parts and a.replenishment_interval_s is None:
            bad("replenishment_interval_s is required when batches are set")
    return out


def _referenced_products(node: Node):
    a = node.attributes
    if isinstance(a, ProcessAttributes):
        return a.cycle_time_s.keys()
    if isinstance(a, StorageAttributes):
        return set(a.safety_stock_parts) | set(a.initial_stock_parts)
    if isinstance(a, CustomerAttributes):
        return a.demand_rate.keys()
    if isinstance(a, SupplierAttributes):
        return a.replenishment_batch_parts.keys()
    return ()


def validate_topology(graph: VsmGraph) -> list:
    """All invariant breaches as data; an empty list means the graph is valid."""
    violations = []
    known_products = set(graph.products)

    seen_ids = set()
    for node in graph.nodes:
        if not node.id:
            violations.append(Violation(EMPTY_NODE_ID, "node <empty>", "node id must be non-empty"))
        if node.id in seen_ids:
            violations.append(Violation(DUPLICATE_NODE_ID, f"node {node.id}", "duplicate node id"))
        seen_ids.add(node.id)
        violations.extend(_attribute_violations(node))
        for product in _referenced_products(node):
            if product not in known_products:
                violations.append(Violation(UNKNOWN_PRODUCT, f"node {node.id}",
                                            f"references product {product!r} not in the product list"))

    for edge in graph.edges:
        subject = f"edge {edge.label()}"
        endpoints_ok = True
        for endpoint in (edge.from_id, edge.to_id):
            if not graph.has_node(endpoint):
                violations.append(Violation(DANGLING_ENDPOINT, subject,
                                            f"endpoint {endpoint!r} does not resolve to a node"))
                endpoints_ok = False
        if endpoints_ok:
            from_kind = graph.node(edge.from_id).kind
            to_kind = graph.node(edge.to_id).kind
            if not edge_is_legal(from_kind, to_kind, edge.kind):
                violations.append(Violation(EDGE_LEGALITY, subject,
                                            f"{from_kind.value} -> {to_kind.value} may not carry {edge.kind.value}"))
        if edge.kind is EdgeKind.MATERIAL:
            if not edge.products:
                violations.append(Violation(MATERIAL_PRODUCTS_EMPTY, subject,
                                            "material edges must carry at least one product"))
            for product in edge.products:
                if product not in known_products:
                    violations.append(Violation(UNKNOWN_PRODUCT, subject,
                                                f"carries product {product!r} not in the product list"))
            if edge.transfer_time_s < 0:
                violations.append(Violation(ATTRIBUTE_RANGE, subject, "transfer_time_s must be >= 0"))
            if edge.batch_size_parts < 1:
                violations.append(Violation(ATTRIBUTE_RANGE, subject, "batch_size_parts must be >= 1"))
        elif edge.transfer_time_s < 0:
            violations.append(Violation(ATTRIBUTE_RANGE, subject, "transfer_time_s must be >= 0"))

    for node in graph.nodes:
        if node.kind is NodeKind.SUPPLIER:
            if not any(e.from_id == node.id and e.kind is EdgeKind.MATERIAL for e in graph.edges):
                violations.append(Violation(SUPPLIER_NO_MATERIAL_OUT, f"node {node.id}",
                                            "suppliers need at least one outgoing material edge"))
        elif node.kind is NodeKind.CUSTOMER:
            if not any(e.to_id == node.id and e.kind is EdgeKind.MATERIAL for e in graph.edges):
                violations.append(Violation(CUSTOMER_NO_MATERIAL_IN, f"node {node.id}",
                                            "customers need at least one incoming material edge"))
    return violations


# --- metadata queries (tool backings) --------------------------------------


def list_nodes(graph: VsmGraph, kind_filter: Optional[NodeKind] = None) -> list:
    """(id, kind) pairs in document order; never exposes attributes."""
    return [(n.id, n.kind) for n in graph.nodes
            if kind_filter is None or n.kind is kind_filter]


def get_node_attributes(graph: VsmGraph, node_id: str) -> AttributeSet:
    return graph.node(node_id).attributes
