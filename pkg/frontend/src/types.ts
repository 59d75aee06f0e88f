// Shapes served by the HTTP API. Field names mirror the JSON documents
// exactly; the trace endpoint returns the persisted file verbatim.

export interface ToolCallAction {
  action: "tool";
  tool: string;
  arguments: Record<string, unknown>;
}

export interface FinalAnswerAction {
  action: "final_answer";
  text: string;
}

export type StepAction = ToolCallAction | FinalAnswerAction;

export interface ToolResultDto {
  tool: string;
  content: string;
  is_error: boolean;
  token_estimate: number;
}

export interface AgentStepDto {
  index: number;
  reasoning_excerpt: string;
  action: StepAction;
  result: ToolResultDto | null;
}

export interface RoleUsage {
  prompt_tokens: number;
  completion_tokens: number;
  total: number;
  source: string;
}

export interface UsageLedger {
  orchestrator: RoleUsage;
  subworkflow: RoleUsage;
  overall: RoleUsage;
}

export interface TraceDocument {
  session_id: string;
  turn: number;
  question: string;
  answer: string;
  steps: AgentStepDto[];
  usage: UsageLedger;
}

export interface SessionMeta {
  session_id: string;
  context_id: string;
  turns: number;
}

export interface ErrorBody {
  error_code: string;
  message: string;
  details: Record<string, unknown>;
}
