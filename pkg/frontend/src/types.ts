// Payload shapes of the dialog service. The client renders these
// verbatim; it never derives traversal state of its own.

export interface QuestionOption {
  node_id: number;
  concept: string;
  has_children: boolean;
}

export interface QuestionPayload {
  node_id: number;
  concept: string;
  question_type: "single" | "multi";
  optional: boolean;
  negatable: boolean;
  default_child: string | null;
  trail: string[];
  extra_annotations: string[];
  options: QuestionOption[];
}

export interface InstancePayload {
  axis: string;
  key: string;
  polarity: "affirmed" | "negated";
  value: unknown;
  path: string[] | null;
}

export interface SessionView {
  session_id: string;
  axis: string;
  status: "active" | "complete";
  answered: number;
  question: QuestionPayload | null;
  episode_preview?: InstancePayload[];
}

export interface InferredSet {
  set: string;
  most_specific: { name: string; key: string }[];
}

export interface CommitResult {
  episode_id: string;
  ts: string;
  episode: {
    id: string;
    ts: string;
    subject: string | null;
    instances: InstancePayload[];
  };
  inferred?: InferredSet[];
}

export interface AnswerRequest {
  node_id: number;
  affirmed: number[];
  negated: number[];
  skip: boolean;
}

export interface ServiceError {
  error: string;
  detail: string;
}
