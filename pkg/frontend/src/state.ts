// Screen state transitions, kept pure so they are testable without a DOM.

import { ConnectionLost, ServiceError } from "./api.js";

export interface ScreenState {
  question: string;
  asking: boolean;
  banner: string | null;
}

export const initialState: ScreenState = { question: "", asking: false, banner: null };

// Submit stays disabled for empty or whitespace questions and while a turn
// is in flight (one ask per session, mirroring the service's 409 contract).
export function canSubmit(state: ScreenState): boolean {
  return !state.asking && state.question.trim().length > 0;
}

export function bannerFor(error: unknown): string {
  if (error instanceof ServiceError && error.answerInProgress) return "answer in progress";
  if (error instanceof ConnectionLost) return "connection lost, retrying";
  const message = error instanceof Error ? error.message : String(error);
  return message ? `error: ${message}` : "error";
}
