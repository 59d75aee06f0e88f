// Trace view model: one step becomes one call card (red accent) plus, when
// the tool returned data, one return card (green accent); the final answer
// becomes the answer card. Cards keep step index order and omit nothing.

import type { AgentStepDto, TraceDocument } from "./types.js";

export type CardKind = "call" | "return" | "answer";

export interface TraceCard {
  kind: CardKind;
  stepIndex: number;
  title: string;
  body: string;
  reasoning: string;
}

function callCard(step: AgentStepDto): TraceCard {
  if (step.action.action !== "tool") throw new Error("not a tool step");
  return {
    kind: "call",
    stepIndex: step.index,
    title: `${step.index}. ${step.action.tool}`,
    body: JSON.stringify(step.action.arguments, null, 2),
    reasoning: step.reasoning_excerpt,
  };
}

function returnCard(step: AgentStepDto): TraceCard {
  return {
    kind: "return",
    stepIndex: step.index,
    title: `${step.index}. ${step.result!.tool} returned`,
    body: step.result!.content,
    reasoning: "",
  };
}

export function toCards(doc: TraceDocument): TraceCard[] {
  const ordered = [...doc.steps].sort((a, b) => a.index - b.index);
  const cards: TraceCard[] = [];
  for (const step of ordered) {
    if (step.action.action === "tool") {
      cards.push(callCard(step));
      if (step.result !== null) cards.push(returnCard(step));
    } else {
      cards.push({
        kind: "answer",
        stepIndex: step.index,
        title: "Answer",
        body: doc.answer,
        reasoning: step.reasoning_excerpt,
      });
    }
  }
  return cards;
}

export function cardCounts(cards: TraceCard[]): Record<CardKind, number> {
  const counts: Record<CardKind, number> = { call: 0, return: 0, answer: 0 };
  for (const card of cards) counts[card.kind] += 1;
  return counts;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderCard(card: TraceCard): string {
  const reasoning = card.reasoning
    ? `<details class="reasoning"><summary>reasoning</summary><pre>${escapeHtml(card.reasoning)}</pre></details>`
    : "";
  return [
    `<article class="card ${card.kind}" data-step="${card.stepIndex}">`,
    `<header>${escapeHtml(card.title)}</header>`,
    reasoning,
    `<pre class="body">${escapeHtml(card.body)}</pre>`,
    `</article>`,
  ].join("");
}

export function renderTrace(doc: TraceDocument): string {
  const cards = toCards(doc).map(renderCard).join("");
  const tokens = doc.usage.overall.total;
  return `<section class="trace" data-turn="${doc.turn}">${cards}` +
    `<footer class="tokens">${tokens} tokens</footer></section>`;
}
