"""Structured-output protocol between the model and the runtime.

Each model turn must contain exactly one JSON envelope, either

    {"action": "tool", "tool": <name>, "arguments": {...}}
or
    {"action": "final_answer", "text": "..."}

Models often wrap the object in prose or think out loud first, so extraction
scans the whole response and keeps the last well-formed envelope. Everything
before it is treated as reasoning text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import EnvelopeParseError

TOOLS = ("node_discovery", "attribute_extraction", "taxonomy_navigation", "summarize")


@dataclass(frozen=True)
class ToolCall:
    tool: str
    arguments: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"action": "tool", "tool": self.tool, "arguments": self.arguments}


@dataclass(frozen=True)
class FinalAnswer:
    text: str

    def to_dict(self) -> dict:
        return {"action": "final_answer", "text": self.text}


def _as_envelope(obj):
    if not isinstance(obj, dict):
        return None
    if obj.get("action") == "final_answer" and set(obj) == {"action", "text"} \
            and isinstance(obj["text"], str):
        return FinalAnswer(text=obj["text"])
    if obj.get("action") == "tool" and set(obj) == {"action", "tool", "arguments"} \
            and obj.get("tool") in TOOLS and isinstance(obj.get("arguments"), dict):
        return ToolCall(tool=obj["tool"], arguments=obj["arguments"])
    return None


def extract_envelope(text: str):
    """(envelope, start offset of its JSON object) for the last valid one."""
    decoder = json.JSONDecoder()
    found = None
    pos = 0
    while True:
        start = text.find("{", pos)
        if start < 0:
            break
        try:
            obj, end = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            pos = start + 1
            continue
        envelope = _as_envelope(obj)
        if envelope is not None:
            found = (envelope, start)
            pos = start + (end - start)
        else:
            pos = start + 1
    if found is None:
        raise EnvelopeParseError(
            "no valid envelope found; reply with exactly one JSON object of the "
            'form {"action":"tool","tool":...,"arguments":{...}} or '
            '{"action":"final_answer","text":...}')
    return found


def parse_envelope(text: str):
    """ToolCall or FinalAnswer from a raw model response."""
    envelope, _ = extract_envelope(text)
    return envelope
