"""Two-step analysis architecture: an orchestration loop that only ever sees
metadata, and a summarization subworkflow that reads one payload per call
with a completely fresh context.

The separation is structural. The orchestrator plans via four tools; three
of them render metadata surfaces, and the fourth (summarize) hands the
element name and an instruction to the subworkflow, which alone holds the
capability token required to open payloads. On top of that, an always-on
monitor asserts that no 32-character run from any payload ever appears in an
orchestrator prompt, so a leak is an exception, not a silent regression.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from ..canon import canonical_json_bytes
from ..catalog import ContextHandle, context_summary
from ..errors import (
    BackendError,
    EnvelopeParseError,
    IsolationBreach,
    OrchestratorBackendError,
    PayloadTooLarge,
    StepLimitExceeded,
    StructuredOutputError,
    UnknownElement,
    UnknownNode,
    UnknownSection,
    UnknownTool,
)
from ..llm import ChatBackend, ChatRequest, TokenUsage, estimate_tokens
from ..model import NodeKind, list_nodes, serialize_vsm
from ..sim.config import format_utc, parse_utc
from ..sim.output import SECTION_TITLES, Element
from .envelope import TOOLS, FinalAnswer, ToolCall, extract_envelope

import datetime as _dt

REASONING_EXCERPT_LIMIT = 2000
ISOLATION_GRAM_CHARS = 32


@dataclass(frozen=True)
class AgentConfig:
    max_steps: int = 25
    max_retries: int = 5          # reprompts after a malformed envelope
    temperature: float = 0.3
    max_tokens_per_response: int = 20000
    orchestrator_model: str = ""
    subworkflow_model: str = ""

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_tokens_per_response < 1:
            raise ValueError("max_tokens_per_response must be >= 1")


@dataclass
class ToolResult:
    tool: str
    content: str
    token_estimate: int

    def to_dict(self) -> dict:
        return {"tool": self.tool, "content": self.content,
                "token_estimate": self.token_estimate}


@dataclass
class AgentStep:
    index: int
    reasoning_excerpt: str
    action: dict                      # serialized ToolCall or FinalAnswer
    result: Optional[ToolResult]

    def to_dict(self) -> dict:
        return {"index": self.index, "reasoning_excerpt": self.reasoning_excerpt,
                "action": self.action,
                "result": self.result.to_dict() if self.result else None}


@dataclass
class AgentAnswer:
    text: str
    trace: list
    usage: dict

    def to_dict(self) -> dict:
        return {"answer": self.text,
                "steps": [s.to_dict() for s in self.trace],
                "usage": self.usage}


def load_prompt(name: str) -> str:
    """Template from the versioned prompt files. Placeholder tokens use the
    $NAME style so JSON braces in the template body stay literal; the
    orchestrator template knows $SECTIONS."""
    return resources.files("vsminsight.agent").joinpath(f"prompts/{name}.txt").read_text("utf-8")


# --- payload rendering --------------------------------------------------------


def render_payload(element: Element) -> str:
    """The exact text a subworkflow sees for an element's data."""
    p = element.payload
    if element.payload_kind == "kpi":
        return f"{p['value']} {p['unit']}"
    if element.payload_kind == "stat_block":
        return "\n".join(f"{k}: {v}" for k, v in p["fields"].items())
    start = parse_utc(p["start_time"])
    step = p["sample_interval_s"]
    products = list(p["series"])
    length = max((len(v) for v in p["series"].values()), default=0)
    lines = [f"unit={p['unit']} start={p['start_time']} interval={step}s "
             f"products={','.join(products)}"]
    for i in range(length):
        stamp = format_utc(start + _dt.timedelta(seconds=i * step))
        values = " ".join(f"{prod}={p['series'][prod][i]}" for prod in products)
        lines.append(f"{stamp} {values}")
    return "\n".join(lines)


class IsolationMonitor:
    """Watchdog for the metadata/payload boundary.

    Collects every 32-character window of every payload (both its rendered
    form and its canonical JSON) at construction; check() scans a prompt and
    raises IsolationBreach on the first hit. Runs on every orchestrator
    prompt, in tests and in production alike.
    """

    def __init__(self, handle: ContextHandle):
        self._grams = set()
        n = ISOLATION_GRAM_CHARS
        for elements in handle.output.sections.values():
            for el in elements:
                for text in (render_payload(el),
                             canonical_json_bytes(el.payload).decode("utf-8")):
                    for i in range(len(text) - n + 1):
                        self._grams.add(text[i:i + n])
        self.checked = 0

    def check(self, prompt_text: str):
        self.checked += 1
        n = ISOLATION_GRAM_CHARS
        for i in range(len(prompt_text) - n + 1):
            window = prompt_text[i:i + n]
            if window in self._grams:
                raise IsolationBreach(
                    f"payload data reached an orchestrator prompt: {window!r}")


# --- usage accounting -----------------------------------------------------------


class _UsageLedger:
    def __init__(self):
        self._by_role = {}

    def add(self, role: str, usage: TokenUsage):
        slot = self._by_role.setdefault(role, {"prompt": 0, "completion": 0, "sources": set()})
        slot["prompt"] += usage.prompt_tokens
        slot["completion"] += usage.completion_tokens
        slot["sources"].add(usage.source)

    @staticmethod
    def _label(sources) -> str:
        if not sources:
            return "none"
        if len(sources) == 1:
            return next(iter(sources))
        return "mixed"

    def to_dict(self) -> dict:
        out = {}
        total_prompt = total_completion = 0
        all_sources = set()
        for role in ("orchestrator", "subworkflow"):
            slot = self._by_role.get(role, {"prompt": 0, "completion": 0, "sources": set()})
            out[role] = {"prompt_tokens": slot["prompt"],
                         "completion_tokens": slot["completion"],
                         "total": slot["prompt"] + slot["completion"],
                         "source": self._label(slot["sources"])}
            total_prompt += slot["prompt"]
            total_completion += slot["completion"]
            all_sources |= slot["sources"]
        out["overall"] = {"prompt_tokens": total_prompt,
                          "completion_tokens": total_completion,
                          "total": total_prompt + total_completion,
                          "source": self._label(all_sources)}
        return out


# --- structured turns --------------------------------------------------------------


def structured_turn(backend: ChatBackend, messages: list, cfg: AgentConfig,
                    model_name: str, parse_fn, on_usage=None, monitor=None):
    """One logical model turn with up to cfg.max_retries reprompts.

    parse_fn raises EnvelopeParseError (or a subclass-compatible error) to
    reject a response; rejected attempts are appended to `messages` so the
    model sees its own failure. Raises StructuredOutputError once the retry
    budget is spent.
    """
    failures = 0
    while True:
        request = ChatRequest(messages=tuple(messages), temperature=cfg.temperature,
                              max_tokens=cfg.max_tokens_per_response, model_name=model_name)
        if monitor is not None:
            monitor.check(request.rendered())
        response = backend.complete(request)
        if on_usage is not None:
            on_usage(response.usage)
        try:
            return parse_fn(response.text), response.text
        except EnvelopeParseError as exc:
            failures += 1
            if failures > cfg.max_retries:
                raise StructuredOutputError(
                    f"no valid structured output after {cfg.max_retries} reprompts: {exc}") from None
            messages.append(("assistant", response.text))
            messages.append(("user", f"Your reply was not accepted: {exc}. "
                                     "Answer again with exactly one valid JSON envelope."))


# --- subworkflow ---------------------------------------------------------------------


def _run_subworkflow(ctx: ContextHandle, element_name: str, instruction: str,
                     cfg: AgentConfig, backend: ChatBackend, capability) -> tuple:
    element = ctx.get_element(element_name, capability)
    rendered = render_payload(element)
    rendered_tokens = estimate_tokens(rendered)
    if rendered_tokens > cfg.max_tokens_per_response:
        raise PayloadTooLarge(
            f"element {element_name!r} renders to ~{rendered_tokens} tokens, "
            f"over the {cfg.max_tokens_per_response}-token budget")
    messages = (
        ("system", load_prompt("subworkflow")),
        ("user", f"Instruction: {instruction}\n\n"
                 f"Domain guidance: {element.expert_knowledge}\n\n"
                 f"Data ({element.payload_kind}):\n{rendered}"),
    )
    request = ChatRequest(messages=messages, temperature=cfg.temperature,
                          max_tokens=cfg.max_tokens_per_response,
                          model_name=cfg.subworkflow_model)
    response = backend.complete(request)
    return response.text, response.usage


def run_subworkflow(ctx: ContextHandle, element_name: str, instruction: str,
                    cfg: AgentConfig, backend: ChatBackend, capability=None) -> str:
    """Summarize one element against an instruction, fresh context, no state
    carried over. This function is the privileged payload path: it mints a
    capability when called directly as the entry point."""
    capability = capability or ctx.mint_capability()
    text, _ = _run_subworkflow(ctx, element_name, instruction, cfg, backend, capability)
    return text


# --- tools ------------------------------------------------------------------------------


_TOOL_SCHEMAS = {
    "node_discovery": {"optional": {"kind"}},
    "attribute_extraction": {"required": {"node"}},
    "taxonomy_navigation": {"required": {"section"}},
    "summarize": {"required": {"element", "instruction"}},
}


def _schema_error(call: ToolCall) -> Optional[str]:
    schema = _TOOL_SCHEMAS[call.tool]
    required = schema.get("required", set())
    allowed = required | schema.get("optional", set())
    unknown = set(call.arguments) - allowed
    if unknown:
        return f"unknown argument(s) {sorted(unknown)}; allowed: {sorted(allowed)}"
    missing = required - set(call.arguments)
    if missing:
        return f"missing required argument(s) {sorted(missing)}"
    for key, value in call.arguments.items():
        if not isinstance(value, str):
            return f"argument {key!r} must be a string"
    return None


def dispatch_tool(call: ToolCall, ctx: ContextHandle, backend: ChatBackend,
                  cfg: AgentConfig, capability=None) -> ToolResult:
    """Execute one tool call. Recoverable problems (bad arguments, unknown
    names) come back as error-text results so the loop can continue; only
    transport-level failures raise."""
    if call.tool not in TOOLS:
        raise UnknownTool(f"no tool named {call.tool!r}")

    def result(content):
        return ToolResult(tool=call.tool, content=content,
                          token_estimate=estimate_tokens(content))

    problem = _schema_error(call)
    if problem:
        return result(f"error: {problem}")

    if call.tool == "node_discovery":
        kind = None
        if "kind" in call.arguments:
            try:
                kind = NodeKind(call.arguments["kind"])
            except ValueError:
                return result(f"error: unknown kind {call.arguments['kind']!r}; "
                              f"kinds: {', '.join(k.value for k in NodeKind)}")
        rows = list_nodes(ctx.graph, kind)
        if not rows:
            return result("no nodes match")
        lines = [f"{node_id} [{node_kind.value}] {ctx.graph.node(node_id).display_name}"
                 for node_id, node_kind in rows]
        return result("\n".join(lines))

    if call.tool == "attribute_extraction":
        node_id = call.arguments["node"]
        try:
            ctx.graph.node(node_id)
        except UnknownNode:
            return result(f"error: unknown node {node_id!r}")
        doc = serialize_vsm(ctx.graph)
        entry = next(n for n in doc["nodes"] if n["id"] == node_id)
        body = json.dumps({"kind": entry["kind"], "name": entry["name"],
                           "attributes": entry["attributes"]}, indent=2, sort_keys=True)
        return result(body)

    if call.tool == "taxonomy_navigation":
        try:
            listings = ctx.list_elements(call.arguments["section"])
        except UnknownSection as exc:
            return result(f"error: {exc}")
        title = SECTION_TITLES[call.arguments["section"]]
        lines = [f"section {call.arguments['section']} ({title}), "
                 f"{len(listings)} element(s):"]
        lines += [f"- {li.name}: {li.expert_knowledge}" for li in listings]
        return result("\n".join(lines))

    # summarize
    try:
        text, usage = _run_subworkflow(ctx, call.arguments["element"],
                                       call.arguments["instruction"], cfg, backend,
                                       capability or ctx.mint_capability())
    except (UnknownElement, PayloadTooLarge) as exc:
        return result(f"error: {exc}")
    out = result(text)
    out.usage = usage  # picked up by the orchestrator's ledger
    return out


# --- orchestration loop -----------------------------------------------------------------


def run_orchestrator(ctx: ContextHandle, question: str, cfg: AgentConfig,
                     backend: ChatBackend,
                     subworkflow_backend: Optional[ChatBackend] = None) -> AgentAnswer:
    """Plan with tools until a final answer, the step limit, or an error.

    The summarize tool runs against subworkflow_backend when given, else the
    orchestrator's own backend (shared scripts interleave both roles). The
    isolation monitor vets every orchestrator prompt before it is sent.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    sub_backend = subworkflow_backend or backend
    capability = ctx.mint_capability()
    monitor = IsolationMonitor(ctx)
    ledger = _UsageLedger()

    system = load_prompt("orchestrator").replace("$SECTIONS", ", ".join(SECTION_TITLES))
    metadata = json.dumps(context_summary(ctx), indent=2, sort_keys=True)
    messages = [("system", system),
                ("user", f"Question: {question}\n\nContext metadata:\n{metadata}")]

    steps = []
    try:
        for index in range(1, cfg.max_steps + 1):
            (envelope, start), raw = structured_turn(
                backend, messages, cfg, cfg.orchestrator_model,
                extract_envelope,
                on_usage=lambda u: ledger.add("orchestrator", u),
                monitor=monitor)
            excerpt = raw[:start].strip()[:REASONING_EXCERPT_LIMIT]
            if isinstance(envelope, FinalAnswer):
                steps.append(AgentStep(index=index, reasoning_excerpt=excerpt,
                                       action=envelope.to_dict(), result=None))
                return AgentAnswer(text=envelope.text, trace=steps, usage=ledger.to_dict())
            tool_result = dispatch_tool(envelope, ctx, sub_backend, cfg, capability=capability)
            sub_usage = getattr(tool_result, "usage", None)
            if sub_usage is not None:
                ledger.add("subworkflow", sub_usage)
            steps.append(AgentStep(index=index, reasoning_excerpt=excerpt,
                                   action=envelope.to_dict(), result=tool_result))
            messages.append(("assistant", raw))
            messages.append(("user", f"Tool result [{envelope.tool}]:\n{tool_result.content}"))
    except OrchestratorBackendError:
        raise
    except BackendError as exc:
        raise OrchestratorBackendError(str(exc), steps=steps) from exc
    raise StepLimitExceeded(f"no final answer after {cfg.max_steps} steps")
