"""Evaluation harness: triple datasets, judged agent runs, judge validation.

A dataset is a list of (context, question, ground truth) triples. run_eval
drives the orchestration loop once per triple per run, has every answer rated
by a judge model, persists each outcome as its own JSON file, and aggregates
the ratings into an EvalReport. Failures never vanish: a triple that errors
is recorded with rating 0 and the error message.

validate_judges scores judge candidates against a human consensus built from
two expert ratings per sample, the same three-stage protocol used to pick a
production judge: expert-vs-expert baseline, consensus target, then
candidate-vs-consensus agreement.
"""

from __future__ import annotations

import json
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from .agent.runtime import AgentConfig, run_orchestrator, structured_turn
from .catalog import ContextHandle, context_summary, load_context
from .errors import (
    EnvelopeParseError,
    OrchestratorBackendError,
    SchemaError,
    VsmInsightError,
    ZeroVariance,
)
from .llm import (
    ChatBackend,
    ChatRequest,
    ChatResponse,
    StaticBackend,
    TokenUsage,
    estimate_tokens,
)
from .metrics import mae, pearson
from .reporting import EvalReport, EvaluatorRow, JudgeValidationReport


@dataclass(frozen=True)
class Triple:
    """One evaluation unit: a question about a context plus its reference answer."""

    context_id: str
    question: str
    ground_truth: str

    def __post_init__(self):
        if not self.context_id.strip():
            raise ValueError("context_id must be non-empty")
        if not self.question.strip():
            raise ValueError("question must be non-empty")
        if not self.ground_truth.strip():
            raise ValueError("ground_truth must be non-empty")

    def to_dict(self) -> dict:
        return {"context_id": self.context_id, "question": self.question,
                "ground_truth": self.ground_truth}


@dataclass(frozen=True)
class JudgeRating:
    value: float
    rationale: str


@dataclass(frozen=True)
class JudgeSample:
    """Judge-validation unit: a triple, a fixed agent response, two expert marks."""

    triple: Triple
    response: str
    expert1: float
    expert2: float

    def __post_init__(self):
        if not self.response.strip():
            raise ValueError("response must be non-empty")
        for value in (self.expert1, self.expert2):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"expert rating {value} outside [0, 1]")


def load_dataset(path) -> list:
    """JSON-lines file, one {context_id, question, ground_truth} per line."""
    triples = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"dataset line {lineno}: not valid JSON ({exc})") from None
        if not isinstance(obj, dict) or set(obj) != {"context_id", "question", "ground_truth"}:
            raise SchemaError(
                f"dataset line {lineno}: expected exactly context_id, question, ground_truth")
        try:
            triples.append(Triple(**obj))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"dataset line {lineno}: {exc}") from None
    if not triples:
        raise SchemaError(f"dataset {path} holds no triples")
    return triples


def load_judge_samples(path) -> list:
    """JSON array of {context_id, question, ground_truth, response, expert1, expert2}."""
    raw = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(raw, list):
        raise SchemaError("judge samples must be a JSON array")
    samples = []
    for pos, item in enumerate(raw):
        try:
            samples.append(JudgeSample(
                triple=Triple(context_id=item["context_id"], question=item["question"],
                              ground_truth=item["ground_truth"]),
                response=item["response"],
                expert1=float(item["expert1"]), expert2=float(item["expert2"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"judge sample {pos}: {exc}") from None
    return samples


class ContextStore:
    """Loads each context directory once and shares the handle."""

    def __init__(self, root):
        self.root = Path(root)
        self._cache = {}

    def get(self, context_id: str) -> ContextHandle:
        if context_id not in self._cache:
            directory = self.root / context_id
            if not directory.is_dir():
                raise SchemaError(f"no context directory for id {context_id!r} under {self.root}")
            self._cache[context_id] = load_context(directory, context_id)
        return self._cache[context_id]


# --- judging -------------------------------------------------------------------


JUDGE_SYSTEM_PROMPT = (
    "You grade answers about value stream simulations. Compare the agent "
    "response with the ground truth for the question; the evidence and the "
    "context digest are background for checking factual claims. Reply with "
    'exactly one JSON object {"rating": <number between 0 and 1>, '
    '"rationale": "<short justification>"}. 0 means wrong, 1 means fully '
    "correct; partial credit is allowed.")


def judge_prompt(ctx: ContextHandle, question: str, ground_truth: str,
                 response: str, evidence: str = "") -> str:
    digest = json.dumps(context_summary(ctx), indent=2, sort_keys=True)
    return (f"### QUESTION\n{question}\n\n"
            f"### GROUND TRUTH\n{ground_truth}\n\n"
            f"### AGENT RESPONSE\n{response}\n\n"
            f"### EVIDENCE\n{evidence or '(none)'}\n\n"
            f"### CONTEXT\n{digest}")


def _as_rating(obj) -> Optional[JudgeRating]:
    if not isinstance(obj, dict) or set(obj) != {"rating", "rationale"}:
        return None
    value, rationale = obj["rating"], obj["rationale"]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return None
    if not isinstance(rationale, str):
        return None
    if not 0.0 <= value <= 1.0:
        return None  # out-of-range counts as a parse failure, triggering a reprompt
    return JudgeRating(value=float(value), rationale=rationale)


def extract_rating(text: str) -> JudgeRating:
    """Last well-formed in-range rating object in the judge's reply."""
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
        rating = _as_rating(obj)
        if rating is not None:
            found = rating
            pos = end
        else:
            pos = start + 1
    if found is None:
        raise EnvelopeParseError(
            "no valid rating found; reply with exactly one JSON object "
            '{"rating": <number in [0, 1]>, "rationale": "..."}')
    return found


def judge(ctx: ContextHandle, question: str, ground_truth: str, response: str,
          llm: ChatBackend, cfg: Optional[AgentConfig] = None,
          evidence: str = "", on_usage=None) -> JudgeRating:
    """Rate a response against the ground truth on [0, 1] via the judge model."""
    for label, value in (("question", question), ("ground_truth", ground_truth),
                         ("response", response)):
        if not value or not value.strip():
            raise ValueError(f"{label} must be non-empty")
    cfg = cfg or AgentConfig()
    messages = [("system", JUDGE_SYSTEM_PROMPT),
                ("user", judge_prompt(ctx, question, ground_truth, response, evidence))]
    rating, _ = structured_turn(llm, messages, cfg, "", extract_rating, on_usage=on_usage)
    return rating


_BLOCK = re.compile(r"^(?:user: )?### ([A-Z][A-Z ]*)\n(.*?)(?=\n(?:user: )?### |\Z)",
                    re.S | re.M)


def _prompt_blocks(rendered: str) -> dict:
    return {m.group(1): m.group(2).strip() for m in _BLOCK.finditer(rendered)}


def _normalize(text: str) -> str:
    return " ".join(re.sub(r"[^0-9a-z]+", " ", text.lower()).split())


class RuleBasedJudgeBackend(ChatBackend):
    """Deterministic grader for CI runs: full marks iff the normalized ground
    truth appears inside the normalized response, zero otherwise."""

    name = "rule-judge"

    def complete(self, request: ChatRequest) -> ChatResponse:
        rendered = request.rendered()
        blocks = _prompt_blocks(rendered)
        truth = _normalize(blocks.get("GROUND TRUTH", ""))
        answer = _normalize(blocks.get("AGENT RESPONSE", ""))
        value = 1.0 if truth and truth in answer else 0.0
        body = json.dumps({"rating": value,
                           "rationale": "normalized containment of the ground truth"})
        return ChatResponse(text=body,
                            usage=TokenUsage(estimate_tokens(rendered),
                                             estimate_tokens(body)),
                            finish_reason="stop")


# --- agent drivers ----------------------------------------------------------------


def oracle_backend_factory(triple: Triple) -> ChatBackend:
    """Backend that answers with the triple's ground truth in one turn. It
    still drives the full orchestration loop, so traces and usage are real."""
    return StaticBackend(json.dumps({"action": "final_answer",
                                     "text": triple.ground_truth}))


def _evidence_digest(answer) -> str:
    lines = []
    for step in answer.trace:
        if step.result is not None:
            lines.append(f"[{step.result.tool}] {step.result.content}")
    return "\n".join(lines)


# --- evaluation runs ---------------------------------------------------------------


def _run_one(run_index: int, triple_index: int, triple: Triple, ctx: ContextHandle,
             backend_factory: Callable, judge_backend: ChatBackend,
             cfg: AgentConfig) -> dict:
    record = {"run": run_index, "triple": triple_index,
              "context_id": triple.context_id, "question": triple.question,
              "ground_truth": triple.ground_truth, "answer": None,
              "rating": 0.0, "rationale": "", "agent_tokens": 0,
              "trace": [], "usage": None, "error": None}
    try:
        answer = run_orchestrator(ctx, triple.question, cfg, backend_factory(triple))
        record["answer"] = answer.text
        record["trace"] = [s.to_dict() for s in answer.trace]
        record["usage"] = answer.usage
        record["agent_tokens"] = answer.usage["overall"]["total"]
        rating = judge(ctx, triple.question, triple.ground_truth, answer.text,
                       judge_backend, cfg, evidence=_evidence_digest(answer))
        record["rating"] = rating.value
        record["rationale"] = rating.rationale
    except OrchestratorBackendError as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
        record["rationale"] = "failed before judging"
        record["trace"] = [s.to_dict() for s in exc.steps]
    except VsmInsightError as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
        record["rationale"] = "failed before judging"
    return record


def aggregate(records: Sequence[dict], label: str = "agent") -> EvalReport:
    """EvalReport from per-(run, triple) records; order-insensitive."""
    records = sorted(records, key=lambda r: (r["run"], r["triple"]))
    runs = sorted({r["run"] for r in records})
    triples = sorted({r["triple"] for r in records})
    by_run = {run: [r for r in records if r["run"] == run] for run in runs}
    for run, rows in by_run.items():
        if [row["triple"] for row in rows] != triples:
            raise SchemaError(f"run {run} does not cover every triple exactly once")
    run_means = [statistics.fmean(row["rating"] for row in by_run[run]) for run in runs]
    return EvalReport(
        label=label,
        runs=len(runs),
        triples=len(triples),
        mean_rating_x100=statistics.fmean(run_means) * 100,
        sd_across_runs_x100=statistics.pstdev(run_means) * 100,
        sample_token_avg=statistics.fmean(r["agent_tokens"] for r in records),
        per_run_means_x100=tuple(m * 100 for m in run_means),
        per_triple_means_x100=tuple(
            statistics.fmean(r["rating"] for r in records if r["triple"] == i) * 100
            for i in triples),
        error_count=sum(1 for r in records if r["error"]))


def run_eval(dataset: Sequence[Triple], contexts_dir, backend_factory: Callable,
             judge_backend: ChatBackend, out_dir, cfg: Optional[AgentConfig] = None,
             runs: int = 4, parallelism: int = 1, label: str = "agent") -> EvalReport:
    """Judge every triple in every run, persist each outcome, aggregate.

    backend_factory(triple) supplies the chat backend driving the agent for
    that triple. Every (run, triple) outcome lands in
    out_dir/run_{r}/triple_{i}.json before aggregation, so the report can be
    rebuilt from disk at any time (see reaggregate).
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if not dataset:
        raise ValueError("dataset must not be empty")
    cfg = cfg or AgentConfig()
    store = ContextStore(contexts_dir)
    for triple in dataset:
        store.get(triple.context_id)  # fail fast on unresolvable contexts
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = []
    for run_index in range(1, runs + 1):
        run_dir = out_dir / f"run_{run_index}"
        run_dir.mkdir(exist_ok=True)

        def work(item):
            index, triple = item
            return _run_one(run_index, index, triple, store.get(triple.context_id),
                            backend_factory, judge_backend, cfg)

        items = list(enumerate(dataset))
        if parallelism > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                run_records = list(pool.map(work, items))
        else:
            run_records = [work(item) for item in items]
        for record in run_records:
            path = run_dir / f"triple_{record['triple']}.json"
            path.write_text(json.dumps(record, indent=2, sort_keys=True,
                                       ensure_ascii=False) + "\n", "utf-8")
        records.extend(run_records)

    report = aggregate(records, label=label)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        "utf-8")
    return report


def reaggregate(out_dir, label: Optional[str] = None) -> EvalReport:
    """Rebuild the report purely from the persisted per-triple records."""
    out_dir = Path(out_dir)
    records = [json.loads(path.read_text("utf-8"))
               for path in sorted(out_dir.glob("run_*/triple_*.json"))]
    if not records:
        raise SchemaError(f"no persisted evaluation records under {out_dir}")
    if label is None:
        report_path = out_dir / "report.json"
        label = "agent"
        if report_path.exists():
            label = json.loads(report_path.read_text("utf-8")).get("label", label)
    return aggregate(records, label=label)


# --- judge validation -----------------------------------------------------------


def validate_judges(samples: Sequence[JudgeSample], candidates: Sequence[tuple],
                    contexts_dir, cfg: Optional[AgentConfig] = None,
                    runs: int = 4) -> JudgeValidationReport:
    """Three stages: expert-vs-expert baseline, consensus target, candidates.

    candidates is a list of (name, ChatBackend). Candidate ratings are
    averaged over `runs` calls per sample before comparison against the
    consensus (the mean of the two expert ratings).
    """
    if len(samples) < 2:
        raise ValueError("judge validation needs at least 2 samples")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    cfg = cfg or AgentConfig()
    store = ContextStore(contexts_dir)

    expert1 = [s.expert1 for s in samples]
    expert2 = [s.expert2 for s in samples]
    consensus = [(a + b) / 2 for a, b in zip(expert1, expert2)]
    try:
        baseline_r = pearson(expert1, expert2)
    except ZeroVariance as exc:
        raise ZeroVariance(
            f"expert baseline over {len(samples)} samples: {exc}") from None
    baseline = EvaluatorRow(name="Expert Consensus",
                            mean_rating_x100=statistics.fmean(consensus) * 100,
                            mae_x100=mae(expert1, expert2) * 100,
                            pearson_x100=baseline_r * 100)

    rows = []
    for name, backend in candidates:
        per_sample = []
        for sample in samples:
            ctx = store.get(sample.triple.context_id)
            ratings = [judge(ctx, sample.triple.question, sample.triple.ground_truth,
                             sample.response, backend, cfg).value
                       for _ in range(runs)]
            per_sample.append(statistics.fmean(ratings))
        try:
            candidate_r = pearson(per_sample, consensus)
        except ZeroVariance as exc:
            raise ZeroVariance(
                f"candidate {name!r} over {len(samples)} samples: {exc}") from None
        rows.append(EvaluatorRow(name=name,
                                 mean_rating_x100=statistics.fmean(per_sample) * 100,
                                 mae_x100=mae(per_sample, consensus) * 100,
                                 pearson_x100=candidate_r * 100))
    return JudgeValidationReport(samples=len(samples), runs=runs,
                                 baseline=baseline, candidates=tuple(rows))
