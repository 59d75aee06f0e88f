"""Operator entry points: validate, simulate, ask, serve, and evaluation runs.

Exit codes: 0 success, 1 domain error (validation, schema, mismatched data),
2 usage error, 3 backend failure. Every subcommand takes --format text|json.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .agent.runtime import AgentConfig, run_orchestrator
from .catalog import context_summary, load_context
from .errors import BackendError, VsmInsightError
from .evaluation import (
    RuleBasedJudgeBackend,
    load_dataset,
    load_judge_samples,
    oracle_backend_factory,
    run_eval,
    validate_judges,
)
from .llm import ScriptedBackend, backend_from_env
from .model import parse_vsm
from .reporting import (
    render_eval_table,
    render_judge_table,
    write_report_files,
    write_validation_files,
)
from .sim import SimulationConfig, simulate

EXIT_DOMAIN = 1
EXIT_BACKEND = 3

format_option = click.option("--format", "fmt", type=click.Choice(["text", "json"]),
                             default="text", show_default=True,
                             help="Output rendering.")


def _emit_json(obj):
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _fail(fmt: str, code: int, payload: dict, text: str):
    if fmt == "json":
        _emit_json(payload)
    else:
        click.echo(text, err=True)
    sys.exit(code)


def _domain_guard(fmt: str, exc: VsmInsightError):
    code = EXIT_BACKEND if isinstance(exc, BackendError) else EXIT_DOMAIN
    _fail(fmt, code, {"status": "error", "error": type(exc).__name__, "message": str(exc)},
          f"error ({type(exc).__name__}): {exc}")


def agent_config(retries: int, temperature: float, max_tokens: int, max_steps: int) -> AgentConfig:
    return AgentConfig(max_retries=retries, temperature=temperature,
                       max_tokens_per_response=max_tokens, max_steps=max_steps)


def build_agent_backends(backend: str, script):
    """Orchestrator plus optional subworkflow backend for ask-style commands.
    A scripted backend is shared: one interleaved transcript drives both."""
    if backend == "scripted":
        if script is None:
            raise click.UsageError("--backend scripted requires --script")
        return ScriptedBackend.from_file(script), None
    return backend_from_env("orchestrator"), backend_from_env("subworkflow")


def render_trace(answer) -> str:
    """Readable text trace: tool calls, returned data, final answer."""
    lines = []
    for step in answer.trace:
        action = step.action
        if action["action"] == "tool":
            args = json.dumps(action["arguments"], sort_keys=True)
            lines.append(f"[{step.index}] tool call: {action['tool']} {args}")
            if step.result is not None:
                body = step.result.content.rstrip("\n")
                lines.extend("      " + line for line in body.splitlines())
        else:
            lines.append(f"[{step.index}] final answer:")
            lines.extend("      " + line for line in answer.text.splitlines())
    usage = answer.usage["overall"]
    lines.append(f"tokens: {usage['total']} (prompt {usage['prompt_tokens']}, "
                 f"completion {usage['completion_tokens']})")
    return "\n".join(lines)


@click.group()
@click.version_option(package_name="vsminsight", prog_name="vsm")
def main():
    """Value stream simulation toolkit: validate graphs, run simulations,
    ask questions through the two-step agent, and evaluate answer quality."""


# --- validate ---------------------------------------------------------------------


@main.command()
@click.argument("graph", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@format_option
def validate(graph: Path, fmt: str):
    """Parse and validate a graph document; exit 0 when it is legal."""
    try:
        parsed = parse_vsm(graph.read_bytes())
    except VsmInsightError as exc:
        violations = [{"rule": v.rule, "subject": v.subject, "message": v.message}
                      for v in getattr(exc, "violations", [])]
        _fail(fmt, EXIT_DOMAIN,
              {"status": "invalid", "error": type(exc).__name__,
               "message": str(exc), "violations": violations},
              "\n".join([f"invalid ({type(exc).__name__}): {exc}"]
                        + [f"  [{v['rule']}] {v['subject']}: {v['message']}"
                           for v in violations]))
    summary = {"status": "ok", "nodes": len(parsed.nodes), "edges": len(parsed.edges),
               "products": list(parsed.products)}
    if fmt == "json":
        _emit_json(summary)
    else:
        click.echo(f"ok: {summary['nodes']} nodes, {summary['edges']} edges, "
                   f"products {', '.join(summary['products'])}")


# --- simulate ---------------------------------------------------------------------


@main.command(name="simulate")
@click.argument("graph", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--horizon", "horizon_s", type=int, required=True,
              help="Simulated duration in seconds.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--interval", "sample_interval_s", type=int, default=3600,
              show_default=True, help="Stock sampling interval in seconds.")
@click.option("--start-time", default="2025-01-01T00:00:00Z", show_default=True,
              help="UTC start timestamp.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path),
              help="Write a loadable context directory (vsm.json + simulation.json).")
@format_option
def simulate_cmd(graph: Path, horizon_s: int, seed: int, sample_interval_s: int,
                 start_time: str, out, fmt: str):
    """Run the discrete event simulation over a graph."""
    try:
        vsm_bytes = graph.read_bytes()
        parsed = parse_vsm(vsm_bytes)
        config = SimulationConfig(horizon_s=horizon_s, seed=seed,
                                  sample_interval_s=sample_interval_s,
                                  start_time=start_time)
        output = simulate(parsed, config)
    except VsmInsightError as exc:
        _domain_guard(fmt, exc)
    if out is not None:
        from .catalog import save_context
        save_context(out, vsm_bytes, output)
    summary = {"status": "ok",
               "graph_hash": output.provenance["graph_hash"],
               "horizon_s": horizon_s, "seed": seed,
               "sections": {sid: len(elements)
                            for sid, elements in output.sections.items()},
               "out": str(out) if out is not None else None}
    if fmt == "json":
        _emit_json(summary)
    else:
        click.echo(f"simulated {horizon_s}s (seed {seed}), graph {summary['graph_hash']}")
        for name, count in summary["sections"].items():
            click.echo(f"  {name}: {count} elements")
        if out is not None:
            click.echo(f"context written to {out}")


# --- ask --------------------------------------------------------------------------


def _ask_impl(context: Path, question: str, backend: str, script, retries: int,
              temperature: float, max_tokens: int, max_steps: int, fmt: str):
    try:
        ctx = load_context(context)
        orchestrator, subworkflow = build_agent_backends(backend, script)
        cfg = agent_config(retries, temperature, max_tokens, max_steps)
        answer = run_orchestrator(ctx, question, cfg, orchestrator,
                                  subworkflow_backend=subworkflow)
    except VsmInsightError as exc:
        _domain_guard(fmt, exc)
    if fmt == "json":
        _emit_json(answer.to_dict())
    else:
        click.echo(render_trace(answer))


def ask_params(fn):
    decorators = [
        click.option("--context", type=click.Path(exists=True, file_okay=False,
                                                  path_type=Path),
                     required=True, help="Context directory."),
        click.option("--question", required=True),
        click.option("--backend", type=click.Choice(["env", "scripted"]),
                     default="env", show_default=True),
        click.option("--script", type=click.Path(exists=True, dir_okay=False),
                     help="Replay transcript for --backend scripted."),
        click.option("--retries", type=int, default=5, show_default=True,
                     help="Reprompts after malformed replies."),
        click.option("--temperature", type=float, default=0.3, show_default=True),
        click.option("--max-tokens", type=int, default=20000, show_default=True),
        click.option("--max-steps", type=int, default=25, show_default=True),
        format_option,
    ]
    for decorator in reversed(decorators):
        fn = decorator(fn)
    return fn


@main.command()
@ask_params
def ask(context, question, backend, script, retries, temperature, max_tokens,
        max_steps, fmt):
    """Ask one question against a context directory and print the trace."""
    _ask_impl(context, question, backend, script, retries, temperature,
              max_tokens, max_steps, fmt)


@main.group()
def agent():
    """Agent operations (alias group)."""


@agent.command(name="ask")
@ask_params
def agent_ask(context, question, backend, script, retries, temperature,
              max_tokens, max_steps, fmt):
    """Alias of the top-level ask subcommand."""
    _ask_impl(context, question, backend, script, retries, temperature,
              max_tokens, max_steps, fmt)


# --- serve ------------------------------------------------------------------------


@main.command()
@click.option("--store", type=click.Path(file_okay=False, path_type=Path),
              required=True, help="On-disk session store directory.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--backend", type=click.Choice(["env", "scripted"]),
              default="env", show_default=True)
@click.option("--script", type=click.Path(exists=True, dir_okay=False),
              help="Replay transcript; a fresh replay serves every ask.")
@click.option("--retries", type=int, default=5, show_default=True)
@click.option("--temperature", type=float, default=0.3, show_default=True)
@click.option("--max-tokens", type=int, default=20000, show_default=True)
@click.option("--max-steps", type=int, default=25, show_default=True)
def serve(store, host, port, backend, script, retries, temperature, max_tokens,
          max_steps):
    """Serve the HTTP API over an on-disk store."""
    import uvicorn

    from .service import create_app

    if backend == "scripted":
        if script is None:
            raise click.UsageError("--backend scripted requires --script")
        script_path = str(script)

        def provider():
            return ScriptedBackend.from_file(script_path), None
    else:
        provider = None  # service defaults to environment-configured backends
    app = create_app(store, backend_provider=provider,
                     cfg=agent_config(retries, temperature, max_tokens, max_steps))
    uvicorn.run(app, host=host, port=port)


# --- eval -------------------------------------------------------------------------


@main.group(name="eval")
def eval_group():
    """Answer-quality evaluation and judge validation."""


def _judge_backend(kind: str):
    if kind == "rule":
        return RuleBasedJudgeBackend()
    return backend_from_env("judge")


@eval_group.command(name="run")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="JSONL of {context_id, question, ground_truth}.")
@click.option("--contexts", "contexts_dir",
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              required=True, help="Directory of context subdirectories.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True,
              help="Where per-triple records, report files, and figures land.")
@click.option("--agent-backend", type=click.Choice(["oracle", "env", "scripted"]),
              default="oracle", show_default=True,
              help="oracle answers with the ground truth through the real loop.")
@click.option("--script", type=click.Path(exists=True, dir_okay=False),
              help="Replay transcript for --agent-backend scripted.")
@click.option("--judge", type=click.Choice(["rule", "env"]), default="rule",
              show_default=True)
@click.option("--runs", type=int, default=4, show_default=True)
@click.option("--parallel", "parallelism", type=int, default=1, show_default=True)
@click.option("--label", default="agent", show_default=True,
              help="Column label in the report table.")
@click.option("--retries", type=int, default=5, show_default=True)
@click.option("--temperature", type=float, default=0.3, show_default=True)
@click.option("--max-tokens", type=int, default=20000, show_default=True)
@click.option("--max-steps", type=int, default=25, show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True,
              help="Render the rating charts next to the report.")
@format_option
def eval_run(dataset, contexts_dir, out, agent_backend, script, judge, runs,
             parallelism, label, retries, temperature, max_tokens, max_steps,
             figures, fmt):
    """Run the dataset through the agent, judge every answer, write a report."""
    try:
        triples = load_dataset(dataset)
        if agent_backend == "oracle":
            factory = oracle_backend_factory
        elif agent_backend == "scripted":
            if script is None:
                raise click.UsageError("--agent-backend scripted requires --script")
            factory = lambda triple: ScriptedBackend.from_file(script)
        else:
            factory = lambda triple: backend_from_env("orchestrator")
        report = run_eval(triples, contexts_dir, factory, _judge_backend(judge), out,
                          cfg=agent_config(retries, temperature, max_tokens, max_steps),
                          runs=runs, parallelism=parallelism, label=label)
        paths = write_report_files(report, out, figures=figures)
    except VsmInsightError as exc:
        _domain_guard(fmt, exc)
    except ValueError as exc:
        _fail(fmt, EXIT_DOMAIN, {"status": "error", "message": str(exc)},
              f"error: {exc}")
    if fmt == "json":
        _emit_json({"report": report.to_dict(),
                    "files": {k: ([str(p) for p in v] if isinstance(v, list) else str(v))
                              for k, v in paths.items()}})
    else:
        click.echo(render_eval_table([report]))
        click.echo(f"records and report under {out}")


@eval_group.command(name="judge-validate")
@click.option("--samples", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="JSON array of expert-rated samples.")
@click.option("--contexts", "contexts_dir",
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              required=True)
@click.option("--judge", "judges", type=click.Choice(["rule", "env"]),
              multiple=True, default=("rule",), show_default=True,
              help="Candidate judges to score against the expert consensus.")
@click.option("--runs", type=int, default=4, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path),
              help="Also write validation files and the agreement figure.")
@click.option("--retries", type=int, default=5, show_default=True)
@click.option("--temperature", type=float, default=0.3, show_default=True)
@click.option("--max-tokens", type=int, default=20000, show_default=True)
@format_option
def judge_validate(samples, contexts_dir, judges, runs, out, retries, temperature,
                   max_tokens, fmt):
    """Score candidate judges against the expert consensus baseline."""
    try:
        loaded = load_judge_samples(samples)
        candidates = [(kind, _judge_backend(kind)) for kind in judges]
        report = validate_judges(loaded, candidates, contexts_dir,
                                 cfg=agent_config(retries, temperature, max_tokens, 25),
                                 runs=runs)
        paths = write_validation_files(report, out) if out is not None else {}
    except VsmInsightError as exc:
        _domain_guard(fmt, exc)
    except ValueError as exc:
        _fail(fmt, EXIT_DOMAIN, {"status": "error", "message": str(exc)},
              f"error: {exc}")
    if fmt == "json":
        _emit_json({"report": report.to_dict(),
                    "files": {k: ([str(p) for p in v] if isinstance(v, list) else str(v))
                              for k, v in paths.items()}})
    else:
        click.echo(render_judge_table(report))
        if out is not None:
            click.echo(f"validation files under {out}")


if __name__ == "__main__":
    main()
