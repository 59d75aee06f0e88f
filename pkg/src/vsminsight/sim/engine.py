"""Discrete-event simulation of a value stream graph.

Time is integer seconds from the configured start. Every event is ordered by
(time, scheduling sequence number), every random draw comes from a per-node
splitmix64 stream seeded from (seed, node id), and dict iteration follows
document order, so a given (graph, config) pair always produces the same
event log and the same serialized output, byte for byte.

Semantics, in brief:
  * Suppliers release their replenishment batch along each outgoing material
    edge every interval, first release one interval after the start.
  * Processes hold one FIFO input buffer, `workers` parallel identical
    workers, and pull single parts from upstream stores when the buffer is
    empty. A part occupies a worker for setup (on product changeover) plus
    the product's cycle time. Finished parts take the first outgoing
    material edge carrying their product and ship once the edge's batch
    size has accumulated. Quality draws happen once per finished part:
    rework re-queues it, scrap discards it.
  * Breakdowns suspend a whole process; in-flight work resumes with its
    remaining time after the repair. Intervals between breakdowns are
    uniform integers in [MTBF/2, 3*MTBF/2].
  * Stores admit arrivals up to a per-product capacity; surplus waits at the
    door and is admitted FIFO as withdrawals free space.
  * Customers generate demand ticks every interval; quantities follow the
    cumulative floor of rate * elapsed hours, so fractional rates average
    out exactly. Demand is served from parts previously delivered to the
    customer, then from upstream stores; what cannot be served is lost.
    Each tick with demand also emits one signal along outgoing information
    edges, which production control relays onward.

Accounting runs strictly inside the horizon: an event scheduled past the
horizon never executes, so a part still on a worker at the end contributes
neither throughput nor busy time.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from fractions import Fraction

from ..canon import fnv1a64
from ..errors import HorizonOverflow, InvalidGraph
from ..model import (
    STORAGE_KINDS,
    CustomerAttributes,
    EdgeKind,
    NodeKind,
    ProcessAttributes,
    SupplierAttributes,
    VsmGraph,
    graph_hash,
)
from .config import SimulationConfig
from .output import (
    Element,
    SimulationOutput,
    element_base_name,
    load_knowledge_templates,
    render_knowledge,
)
from .rng import SplitMix64

EVENT_BUDGET = 5_000_000

_SCALE = 1 << 64


def _fraction_threshold(value: float) -> int:
    """floor(value * 2^64) computed exactly; compare raw u64 draws against it."""
    return math.floor(Fraction(value) * _SCALE)


class _StoreState:
    def __init__(self, node, products):
        self.node = node
        attrs = node.attributes
        self.cap = attrs.max_capacity_parts
        self.stock = {p: attrs.initial_stock_parts.get(p, 0)
                      for p in products
                      if p in attrs.initial_stock_parts or p in attrs.safety_stock_parts}
        self.initial = dict(self.stock)
        self.pending = deque()  # (product, qty) waiting for space
        self.changes = []       # (time, product, new_level)

    def level(self, product):
        return self.stock.get(product, 0)

    def space(self, product):
        if self.cap is None:
            return None
        return self.cap - self.level(product)

    def _set(self, time_s, product, value):
        self.stock[product] = value
        self.changes.append((time_s, product, value))


class _ProcState:
    def __init__(self, node):
        self.node = node
        attrs = node.attributes
        self.workers = attrs.workers
        self.buffer = deque()          # (product, arrived_at)
        self.active = {}               # job_id -> job dict
        self.inbound_pulls = 0
        self.last_product = None
        self.down = False
        self.suspended = []            # jobs parked by a breakdown
        self.pending_out = {}          # (edge_pos, product) -> accumulated parts
        self.rework_threshold = _fraction_threshold(attrs.rework_fraction)
        self.fail_threshold = math.floor(
            (Fraction(attrs.rework_fraction) + Fraction(attrs.scrap_fraction)) * _SCALE)
        # counters
        self.busy_s = 0
        self.setup_s = 0
        self.setups = 0
        self.breakdowns = 0
        self.downtime_s = 0
        self.good = 0
        self.rework = 0
        self.scrap = 0
        self.lead_times = []

    def free_slots(self):
        return self.workers - len(self.active) - self.inbound_pulls


class _CustomerState:
    def __init__(self, node):
        self.node = node
        self.received = {}
        self.received_total = 0
        self.demanded = {}
        self.fulfilled = {}
        self.cum_floor = {}
        self.tick_index = 0


class _Simulation:
    def __init__(self, graph: VsmGraph, config: SimulationConfig):
        self.graph = graph
        self.config = config
        self.horizon = config.horizon_s
        self.heap = []
        self.seq = 0
        self.processed = 0
        self.log = []
        self.job_counter = 0

        self.stores = {}
        self.procs = {}
        self.customers = {}
        self.rng = {}
        for node in graph.nodes:
            self.rng[node.id] = SplitMix64(config.seed ^ fnv1a64(node.id.encode("utf-8")))
            if node.kind in STORAGE_KINDS:
                self.stores[node.id] = _StoreState(node, graph.products)
            elif node.kind is NodeKind.PROCESS:
                self.procs[node.id] = _ProcState(node)
            elif node.kind is NodeKind.CUSTOMER:
                self.customers[node.id] = _CustomerState(node)

        self.flow_delivered = {i: 0 for i, e in enumerate(graph.edges) if e.kind is EdgeKind.MATERIAL}
        self.signals_sent = {i: 0 for i, e in enumerate(graph.edges) if e.kind is EdgeKind.INFORMATION}

        self._check_preconditions()

    # -- wiring helpers ----------------------------------------------------

    def _check_preconditions(self):
        for node in self.graph.nodes:
            if node.kind is not NodeKind.PROCESS:
                continue
            takes = set()
            for e in self.graph.edges:
                if e.kind is EdgeKind.MATERIAL and e.to_id == node.id:
                    takes.update(e.products)
            missing = takes - set(node.attributes.cycle_time_s)
            if missing:
                raise InvalidGraph(
                    f"process {node.id!r} receives {sorted(missing)} but has no cycle time for them")

    def _out_edges(self, node_id, kind):
        return [(i, e) for i, e in enumerate(self.graph.edges)
                if e.from_id == node_id and e.kind is kind]

    def _in_store_edges(self, node_id):
        return [(i, e) for i, e in enumerate(self.graph.edges)
                if e.to_id == node_id and e.kind is EdgeKind.MATERIAL
                and self.graph.node(e.from_id).kind in STORAGE_KINDS]

    def _downstream_consumers(self, store_id):
        """Processes fed by this store, in edge document order."""
        out = []
        for _, e in self._out_edges(store_id, EdgeKind.MATERIAL):
            if self.graph.node(e.to_id).kind is NodeKind.PROCESS and e.to_id not in out:
                out.append(e.to_id)
        return out

    # -- scheduling --------------------------------------------------------

    def _schedule(self, time_s, kind, **data):
        if time_s > self.horizon:
            return
        self.seq += 1
        heapq.heappush(self.heap, (time_s, self.seq, kind, data))

    def _emit(self, time_s, etype, node, **extra):
        entry = {"time_s": time_s, "seq": len(self.log), "type": etype, "node": node}
        entry.update(extra)
        self.log.append(entry)

    # -- store mechanics ---------------------------------------------------

    def _store_admit(self, time_s, store: _StoreState, product, qty):
        """Admit up to capacity, queue the rest at the door."""
        space = store.space(product)
        allowed = qty if space is None else min(qty, max(space, 0))
        if allowed > 0:
            store._set(time_s, product, store.level(product) + allowed)
            self._emit(time_s, "store_in", store.node.id, product=product, qty=allowed)
        if allowed < qty:
            store.pending.append((product, qty - allowed))
        if allowed > 0:
            for proc_id in self._downstream_consumers(store.node.id):
                self._try_start(time_s, self.procs[proc_id])

    def _store_withdraw(self, time_s, store: _StoreState, product, qty):
        granted = min(store.level(product), qty)
        if granted > 0:
            store._set(time_s, product, store.level(product) - granted)
            self._emit(time_s, "store_out", store.node.id, product=product, qty=granted)
            self._drain_pending(time_s, store)
        return granted

    def _drain_pending(self, time_s, store: _StoreState):
        moved = True
        while moved and store.pending:
            moved = False
            product, qty = store.pending[0]
            space = store.space(product)
            allowed = qty if space is None else min(qty, max(space, 0))
            if allowed > 0:
                store.pending.popleft()
                remainder = qty - allowed
                if remainder:
                    store.pending.appendleft((product, remainder))
                store._set(time_s, product, store.level(product) + allowed)
                self._emit(time_s, "store_in", store.node.id, product=product, qty=allowed)
                moved = allowed == qty
                for proc_id in self._downstream_consumers(store.node.id):
                    self._try_start(time_s, self.procs[proc_id])

    # -- process mechanics ---------------------------------------------------

    def _try_start(self, time_s, proc: _ProcState):
        while not proc.down and proc.free_slots() > 0:
            part = None
            if proc.buffer:
                part = proc.buffer.popleft()
            else:
                part = self._pull_from_upstream(time_s, proc)
                if part == "scheduled":
                    continue
            if part is None:
                return
            self._start_job(time_s, proc, part)

    def _pull_from_upstream(self, time_s, proc: _ProcState):
        for edge_pos, edge in self._in_store_edges(proc.node.id):
            store = self.stores[edge.from_id]
            for product in edge.products:
                if store.level(product) > 0:
                    self._store_withdraw(time_s, store, product, 1)
                    if edge.transfer_time_s == 0:
                        self.flow_delivered[edge_pos] += 1
                        self._emit(time_s, "material_arrival", proc.node.id,
                                   product=product, qty=1, edge=edge.label())
                        return (product, time_s)
                    proc.inbound_pulls += 1
                    self._schedule(time_s + edge.transfer_time_s, "material_arrival",
                                   node=proc.node.id, product=product, qty=1,
                                   edge_pos=edge_pos, pulled=True)
                    return "scheduled"
        return None

    def _start_job(self, time_s, proc: _ProcState, part):
        product, arrived_at = part
        attrs = proc.node.attributes
        setup = 0
        if proc.last_product is not None and proc.last_product != product and attrs.setup_time_s:
            setup = attrs.setup_time_s
            self._emit(time_s, "setup", proc.node.id, product=product, duration_s=setup)
        proc.last_product = product
        duration = setup + attrs.cycle_time_s[product]
        self.job_counter += 1
        job = {"id": self.job_counter, "product": product, "arrived_at": arrived_at,
               "start": time_s, "finish": time_s + duration, "setup": setup,
               "cycle": attrs.cycle_time_s[product], "epoch": 0}
        proc.active[job["id"]] = job
        self._emit(time_s, "process_start", proc.node.id, product=product, job=job["id"])
        self._schedule(job["finish"], "process_finish", node=proc.node.id,
                       job=job["id"], epoch=0)

    def _finish_job(self, time_s, proc: _ProcState, job):
        del proc.active[job["id"]]
        proc.busy_s += job["cycle"]
        if job["setup"]:
            proc.setup_s += job["setup"]
            proc.setups += 1
        product = job["product"]
        attrs = proc.node.attributes

        outcome = "good"
        if attrs.rework_fraction > 0 or attrs.scrap_fraction > 0:
            draw = self.rng[proc.node.id].next_u64()
            if draw < proc.rework_threshold:
                outcome = "rework"
            elif draw < proc.fail_threshold:
                outcome = "scrap"

        if outcome == "rework":
            proc.rework += 1
            self._emit(time_s, "rework", proc.node.id, product=product, job=job["id"])
            proc.buffer.append((product, job["arrived_at"]))
        elif outcome == "scrap":
            proc.scrap += 1
            self._emit(time_s, "scrap", proc.node.id, product=product, job=job["id"])
        else:
            proc.good += 1
            proc.lead_times.append(time_s - job["arrived_at"])
            self._emit(time_s, "process_finish", proc.node.id, product=product, job=job["id"])
            self._route_output(time_s, proc, product)
        self._try_start(time_s, proc)

    def _route_output(self, time_s, proc: _ProcState, product):
        for edge_pos, edge in self._out_edges(proc.node.id, EdgeKind.MATERIAL):
            if product in edge.products:
                key = (edge_pos, product)
                proc.pending_out[key] = proc.pending_out.get(key, 0) + 1
                if proc.pending_out[key] >= edge.batch_size_parts:
                    qty = proc.pending_out.pop(key)
                    self._ship(time_s, edge_pos, edge, product, qty, proc.node.id)
                return
        # no outgoing edge carries this product: the part leaves the model here

    def _ship(self, time_s, edge_pos, edge, product, qty, from_node):
        self._emit(time_s, "shipment", from_node, product=product, qty=qty, edge=edge.label())
        self._schedule(time_s + edge.transfer_time_s, "material_arrival",
                       node=edge.to_id, product=product, qty=qty, edge_pos=edge_pos)

    # -- event handlers ------------------------------------------------------

    def _on_supplier_tick(self, time_s, node_id):
        attrs: SupplierAttributes = self.graph.node(node_id).attributes
        self._emit(time_s, "supplier_tick", node_id)
        for edge_pos, edge in self._out_edges(node_id, EdgeKind.MATERIAL):
            for product in edge.products:
                qty = attrs.replenishment_batch_parts.get(product, 0)
                if qty > 0:
                    self._ship(time_s, edge_pos, edge, product, qty, node_id)
        self._schedule(time_s + attrs.replenishment_interval_s, "supplier_tick", node=node_id)

    def _on_material_arrival(self, time_s, data):
        node = self.graph.node(data["node"])
        qty = data["qty"]
        product = data["product"]
        if "edge_pos" in data:
            self.flow_delivered[data["edge_pos"]] += qty
            edge_label = self.graph.edges[data["edge_pos"]].label()
        else:
            edge_label = data.get("edge", "")
        self._emit(time_s, "material_arrival", node.id, product=product, qty=qty, edge=edge_label)

        if node.kind is NodeKind.PROCESS:
            proc = self.procs[node.id]
            if data.get("pulled"):
                proc.inbound_pulls -= 1
            for _ in range(qty):
                proc.buffer.append((product, time_s))
            self._try_start(time_s, proc)
        elif node.kind in STORAGE_KINDS:
            self._store_admit(time_s, self.stores[node.id], product, qty)
        elif node.kind is NodeKind.CUSTOMER:
            cust = self.customers[node.id]
            cust.received_total += qty
            # parts the customer pulled itself were consumed at the demand
            # tick; only pushed deliveries become on-hand inventory
            if not data.get("consumed"):
                cust.received[product] = cust.received.get(product, 0) + qty

    def _on_customer_tick(self, time_s, node_id):
        cust = self.customers[node_id]
        attrs: CustomerAttributes = cust.node.attributes
        cust.tick_index += 1
        elapsed_hours = Fraction(cust.tick_index * attrs.demand_interval_s, 3600)
        any_demand = False
        for product, rate in attrs.demand_rate.items():
            cum = math.floor(Fraction(rate) * elapsed_hours)
            qty = cum - cust.cum_floor.get(product, 0)
            cust.cum_floor[product] = cum
            if qty <= 0:
                continue
            any_demand = True
            cust.demanded[product] = cust.demanded.get(product, 0) + qty
            self._emit(time_s, "demand", node_id, product=product, qty=qty)
            remaining = qty
            have = cust.received.get(product, 0)
            if have > 0:
                used = min(have, remaining)
                cust.received[product] = have - used
                remaining -= used
                cust.fulfilled[product] = cust.fulfilled.get(product, 0) + used
            if remaining > 0:
                for edge_pos, edge in self._in_store_edges(node_id):
                    if product not in edge.products or remaining == 0:
                        continue
                    got = self._store_withdraw(time_s, self.stores[edge.from_id], product, remaining)
                    if got > 0:
                        remaining -= got
                        cust.fulfilled[product] = cust.fulfilled.get(product, 0) + got
                        self._schedule(time_s + edge.transfer_time_s, "material_arrival",
                                       node=node_id, product=product, qty=got,
                                       edge_pos=edge_pos, consumed=True)
            if remaining > 0:
                self._emit(time_s, "demand_unmet", node_id, product=product, qty=remaining)
        if any_demand:
            for edge_pos, edge in self._out_edges(node_id, EdgeKind.INFORMATION):
                self.signals_sent[edge_pos] += 1
                self._emit(time_s, "info_signal", node_id, edge=edge.label())
                self._schedule(time_s + edge.transfer_time_s, "info_arrival",
                               node=edge.to_id, hops=1)
        self._schedule(time_s + attrs.demand_interval_s, "customer_tick", node=node_id)

    def _on_info_arrival(self, time_s, data):
        node = self.graph.node(data["node"])
        if node.kind is not NodeKind.PRODUCTION_CONTROL or data["hops"] > 4:
            return
        for edge_pos, edge in self._out_edges(node.id, EdgeKind.INFORMATION):
            self.signals_sent[edge_pos] += 1
            self._emit(time_s, "info_signal", node.id, edge=edge.label())
            self._schedule(time_s + edge.transfer_time_s, "info_arrival",
                           node=edge.to_id, hops=data["hops"] + 1)

    def _on_breakdown(self, time_s, node_id):
        proc = self.procs[node_id]
        attrs: ProcessAttributes = proc.node.attributes
        proc.down = True
        proc.breakdowns += 1
        proc.downtime_s += min(attrs.repair_duration_s, self.horizon - time_s)
        self._emit(time_s, "breakdown", node_id)
        for job in list(proc.active.values()):
            job["epoch"] += 1
            job["remaining"] = job["finish"] - time_s
            proc.suspended.append(job)
            del proc.active[job["id"]]
        self._schedule(time_s + attrs.repair_duration_s, "repair", node=node_id)

    def _on_repair(self, time_s, node_id):
        proc = self.procs[node_id]
        proc.down = False
        self._emit(time_s, "repair", node_id)
        for job in proc.suspended:
            job["finish"] = time_s + job["remaining"]
            proc.active[job["id"]] = job
            self._schedule(job["finish"], "process_finish", node=node_id,
                           job=job["id"], epoch=job["epoch"])
        proc.suspended.clear()
        self._try_start(time_s, proc)
        self._schedule_breakdown(node_id, time_s)

    def _schedule_breakdown(self, node_id, from_time):
        attrs: ProcessAttributes = self.graph.node(node_id).attributes
        mtbf = attrs.mean_time_between_failures_s
        if mtbf <= 0:
            return
        interval = self.rng[node_id].uniform_int(mtbf // 2, mtbf + mtbf // 2)
        self._schedule(from_time + interval, "breakdown", node=node_id)

    # -- main loop -----------------------------------------------------------

    def run(self):
        for node in self.graph.nodes:
            if node.kind is NodeKind.SUPPLIER:
                attrs = node.attributes
                if attrs.replenishment_interval_s and attrs.replenishment_batch_parts:
                    self._schedule(attrs.replenishment_interval_s, "supplier_tick", node=node.id)
            elif node.kind is NodeKind.CUSTOMER:
                attrs = node.attributes
                if attrs.demand_interval_s and attrs.demand_rate:
                    self._schedule(attrs.demand_interval_s, "customer_tick", node=node.id)
            elif node.kind is NodeKind.PROCESS:
                self._schedule_breakdown(node.id, 0)
                if self._in_store_edges(node.id):
                    self._schedule(0, "pull_kick", node=node.id)

        while self.heap:
            time_s, _, kind, data = heapq.heappop(self.heap)
            if time_s > self.horizon:
                break
            self.processed += 1
            if self.processed > EVENT_BUDGET:
                raise HorizonOverflow(
                    f"event budget of {EVENT_BUDGET} exceeded at t={time_s}s; "
                    "the horizon or the model is too large")
            if kind == "supplier_tick":
                self._on_supplier_tick(time_s, data["node"])
            elif kind == "material_arrival":
                self._on_material_arrival(time_s, data)
            elif kind == "customer_tick":
                self._on_customer_tick(time_s, data["node"])
            elif kind == "info_arrival":
                self._on_info_arrival(time_s, data)
            elif kind == "process_finish":
                proc = self.procs[data["node"]]
                job = proc.active.get(data["job"])
                if job is not None and job["epoch"] == data["epoch"]:
                    self._finish_job(time_s, proc, job)
            elif kind == "breakdown":
                self._on_breakdown(time_s, data["node"])
            elif kind == "repair":
                self._on_repair(time_s, data["node"])
            elif kind == "pull_kick":
                self._try_start(time_s, self.procs[data["node"]])

    # -- output assembly -----------------------------------------------------

    def build_output(self) -> SimulationOutput:
        templates = load_knowledge_templates()
        taken = set()
        base = {n.id: element_base_name(n.id, taken) for n in self.graph.nodes}

        # element names must be unique across the whole output so they can
        # be addressed without naming their section
        used_names = set()

        def unique(name):
            candidate = name
            suffix = 2
            while candidate in used_names:
                candidate = f"{name}_{suffix}"
                suffix += 1
            used_names.add(candidate)
            return candidate
        cfg = self.config
        sections = {sid: [] for sid in
                    ("stock_statistics", "process_utilization", "throughput", "lead_times",
                     "rework_scrap", "material_flow", "information_flow",
                     "resource_utilization", "setup_downtime", "order_fulfillment",
                     "bottleneck_analysis")}

        grid = list(range(0, self.horizon + 1, cfg.sample_interval_s))

        for node in self.graph.nodes:
            if node.kind not in STORAGE_KINDS:
                continue
            store = self.stores[node.id]
            products = [p for p in self.graph.products
                        if p in store.initial or any(c[1] == p for c in store.changes)]
            series = {}
            for p in products:
                level = store.initial.get(p, 0)
                changes = [(t, v) for t, prod, v in store.changes if prod == p]
                idx = 0
                points = []
                for t in grid:
                    while idx < len(changes) and changes[idx][0] <= t:
                        level = changes[idx][1]
                        idx += 1
                    points.append(level)
                series[p] = points
            safety = ", ".join(f"{p}={node.attributes.safety_stock_parts.get(p, 0)}"
                               for p in products) or "none"
            sections["stock_statistics"].append(Element(
                name=base[node.id],
                expert_knowledge=render_knowledge(templates, "stock_series", node=base[node.id],
                                                  sample_interval_s=cfg.sample_interval_s,
                                                  safety=safety),
                payload_kind="time_series",
                payload={"start_time": cfg.start_time, "sample_interval_s": cfg.sample_interval_s,
                         "unit": "parts", "series": series}))
            fields = {}
            for p in products:
                pts = series[p]
                fields[f"{p}_initial"] = store.initial.get(p, 0)
                fields[f"{p}_min"] = min(pts)
                fields[f"{p}_max"] = max(pts)
                fields[f"{p}_mean"] = sum(pts) / len(pts)
                fields[f"{p}_final"] = pts[-1]
                fields[f"{p}_safety_stock"] = node.attributes.safety_stock_parts.get(p, 0)
            sections["stock_statistics"].append(Element(
                name=f"{base[node.id]}_summary",
                expert_knowledge=render_knowledge(templates, "stock_summary", node=base[node.id]),
                payload_kind="stat_block",
                payload={"fields": fields}))

        horizon = self.horizon
        utilizations = {}
        for node in self.graph.nodes:
            if node.kind is not NodeKind.PROCESS:
                continue
            proc = self.procs[node.id]
            capacity = proc.workers * horizon
            util = proc.busy_s * 100 / capacity
            utilizations[node.id] = util
            sections["process_utilization"].append(Element(
                name=f"{base[node.id]}_utilization",
                expert_knowledge=render_knowledge(templates, "process_utilization", node=base[node.id]),
                payload_kind="kpi",
                payload={"value": util, "unit": "percent"}))
            sections["throughput"].append(Element(
                name=f"{base[node.id]}_throughput",
                expert_knowledge=render_knowledge(templates, "throughput", node=base[node.id]),
                payload_kind="kpi",
                payload={"value": proc.good, "unit": "parts"}))
            lt = proc.lead_times
            sections["lead_times"].append(Element(
                name=f"{base[node.id]}_lead_time",
                expert_knowledge=render_knowledge(templates, "lead_times", node=base[node.id]),
                payload_kind="stat_block",
                payload={"fields": {
                    "count": len(lt),
                    "min_s": min(lt) if lt else 0,
                    "mean_s": sum(lt) / len(lt) if lt else 0.0,
                    "max_s": max(lt) if lt else 0,
                }}))
            sections["rework_scrap"].append(Element(
                name=f"{base[node.id]}_rework",
                expert_knowledge=render_knowledge(templates, "rework", node=base[node.id]),
                payload_kind="kpi",
                payload={"value": proc.rework, "unit": "parts"}))
            sections["rework_scrap"].append(Element(
                name=f"{base[node.id]}_scrap",
                expert_knowledge=render_knowledge(templates, "scrap", node=base[node.id]),
                payload_kind="kpi",
                payload={"value": proc.scrap, "unit": "parts"}))
            sections["resource_utilization"].append(Element(
                name=f"{base[node.id]}_resources",
                expert_knowledge=render_knowledge(templates, "resource_utilization",
                                                  node=base[node.id], workers=proc.workers),
                payload_kind="stat_block",
                payload={"fields": {
                    "workers": proc.workers,
                    "busy_s": proc.busy_s,
                    "idle_s": capacity - proc.busy_s,
                    "utilization_percent": util,
                }}))
            sections["setup_downtime"].append(Element(
                name=f"{base[node.id]}_interruptions",
                expert_knowledge=render_knowledge(templates, "setup_downtime", node=base[node.id]),
                payload_kind="stat_block",
                payload={"fields": {
                    "breakdowns": proc.breakdowns,
                    "downtime_s": proc.downtime_s,
                    "setups": proc.setups,
                    "setup_s": proc.setup_s,
                }}))

        for pos, edge in enumerate(self.graph.edges):
            if edge.kind is EdgeKind.MATERIAL:
                sections["material_flow"].append(Element(
                    name=f"{base[edge.from_id]}_to_{base[edge.to_id]}_flow",
                    expert_knowledge=render_knowledge(templates, "material_flow",
                                                      source=base[edge.from_id], target=base[edge.to_id]),
                    payload_kind="kpi",
                    payload={"value": self.flow_delivered[pos], "unit": "parts"}))
            else:
                sections["information_flow"].append(Element(
                    name=f"{base[edge.from_id]}_to_{base[edge.to_id]}_signals",
                    expert_knowledge=render_knowledge(templates, "information_flow",
                                                      source=base[edge.from_id], target=base[edge.to_id]),
                    payload_kind="kpi",
                    payload={"value": self.signals_sent[pos], "unit": "signals"}))

        for node in self.graph.nodes:
            if node.kind is not NodeKind.CUSTOMER:
                continue
            cust = self.customers[node.id]
            demanded = sum(cust.demanded.values())
            fulfilled = sum(cust.fulfilled.values())
            fields = {
                "demanded": demanded,
                "fulfilled": fulfilled,
                "unmet": demanded - fulfilled,
                "fill_rate_percent": 100.0 if demanded == 0 else fulfilled * 100 / demanded,
                "received_parts": cust.received_total,
            }
            for p in self.graph.products:
                if p in cust.demanded:
                    fields[f"{p}_demanded"] = cust.demanded[p]
                    fields[f"{p}_fulfilled"] = cust.fulfilled.get(p, 0)
            sections["order_fulfillment"].append(Element(
                name=f"{base[node.id]}_fulfillment",
                expert_knowledge=render_knowledge(templates, "order_fulfillment", node=base[node.id]),
                payload_kind="stat_block",
                payload={"fields": fields}))

        if utilizations:
            fields = {f"{base[nid]}_utilization_percent": u for nid, u in utilizations.items()}
            # max() keeps the first process in document order on ties
            peak = max(utilizations.items(), key=lambda kv: kv[1])
            fields["bottleneck"] = base[peak[0]]
            sections["bottleneck_analysis"].append(Element(
                name="bottleneck_overview",
                expert_knowledge=render_knowledge(templates, "bottleneck_overview"),
                payload_kind="stat_block",
                payload={"fields": fields}))

        for elements in sections.values():
            for el in elements:
                el.name = unique(el.name)

        return SimulationOutput(
            sections=sections,
            provenance={"graph_hash": graph_hash(self.graph), "config": cfg.as_dict()})


def run_simulation(graph: VsmGraph, config: SimulationConfig):
    """Run to the horizon; returns (output document, raw event log)."""
    config.validate()
    sim = _Simulation(graph, config)
    sim.run()
    return sim.build_output(), sim.log


def simulate(graph: VsmGraph, config: SimulationConfig) -> SimulationOutput:
    output, _ = run_simulation(graph, config)
    return output
