import { ApiError, DialogApi } from "./api.js";
import type {
  InferredSet,
  InstancePayload,
  QuestionPayload,
  SessionView,
} from "./types.js";

export interface OptionState {
  nodeId: number;
  label: string;
  hasChildren: boolean;
}

// Everything the view layer needs; derived 1:1 from the latest service
// payload, with zero traversal logic of its own.
export interface ViewState {
  sessionId: string | null;
  status: "idle" | "active" | "complete" | "committed";
  prompt: string | null;
  control: "single" | "multi" | null;
  allowSkip: boolean;
  allowNegate: boolean;
  breadcrumb: string[];
  notes: string[];
  options: OptionState[];
  canGoBack: boolean;
  episodeKeys: { key: string; polarity: string }[];
  committedEpisodeId: string | null;
  inferred: InferredSet[];
  warning: string | null;
}

export type Selection =
  | { kind: "choose"; affirmed: number[]; negated: number[] }
  | { kind: "skip" };

const IDLE: ViewState = {
  sessionId: null,
  status: "idle",
  prompt: null,
  control: null,
  allowSkip: false,
  allowNegate: false,
  breadcrumb: [],
  notes: [],
  options: [],
  canGoBack: false,
  episodeKeys: [],
  committedEpisodeId: null,
  inferred: [],
  warning: null,
};

function fromSessionView(view: SessionView): ViewState {
  const question = view.question;
  return {
    ...IDLE,
    sessionId: view.session_id,
    status: view.status,
    prompt: question ? question.concept : null,
    control: question ? question.question_type : null,
    allowSkip: question ? question.optional || question.question_type === "multi" : false,
    allowNegate: question ? question.negatable : false,
    breadcrumb: question ? question.trail : [],
    notes: question ? question.extra_annotations : [],
    options: question
      ? question.options.map((o) => ({
          nodeId: o.node_id,
          label: o.concept,
          hasChildren: o.has_children,
        }))
      : [],
    canGoBack: view.answered > 0,
    episodeKeys: (view.episode_preview ?? []).map((r: InstancePayload) => ({
      key: r.key,
      polarity: r.polarity,
    })),
  };
}

export class DialogController {
  private readonly api: DialogApi;
  private readonly onRender: (state: ViewState) => void;
  private state: ViewState = IDLE;
  private lastView: SessionView | null = null;
  // audit trail: every question payload this controller has rendered,
  // in order; tests hold it against the service's own sequence
  readonly renderedQuestions: QuestionPayload[] = [];

  constructor(api: DialogApi, onRender: (state: ViewState) => void) {
    this.api = api;
    this.onRender = onRender;
  }

  get current(): ViewState {
    return this.state;
  }

  private render(state: ViewState) {
    this.state = state;
    this.onRender(state);
  }

  private absorb(view: SessionView) {
    this.lastView = view;
    if (view.question) {
      this.renderedQuestions.push(view.question);
    }
    this.render(fromSessionView(view));
  }

  // a service rejection must not destroy the current question
  private warn(error: unknown) {
    if (error instanceof ApiError) {
      this.render({ ...this.state, warning: `${error.kind}: ${error.message}` });
      return;
    }
    throw error;
  }

  async start(axis: string): Promise<void> {
    this.absorb(await this.api.startSession(axis));
  }

  async choose(selection: Selection): Promise<void> {
    if (!this.lastView?.question || this.state.sessionId === null) {
      this.warn(new ApiError(409, { error: "NoQuestion", detail: "no active question" }));
      return;
    }
    const nodeId = this.lastView.question.node_id;
    const body =
      selection.kind === "skip"
        ? { node_id: nodeId, affirmed: [], negated: [], skip: true }
        : {
            node_id: nodeId,
            affirmed: selection.affirmed,
            negated: selection.negated,
            skip: false,
          };
    try {
      this.absorb(await this.api.answer(this.state.sessionId, body));
    } catch (error) {
      this.warn(error);
    }
  }

  async goBack(): Promise<void> {
    if (this.state.sessionId === null) return;
    try {
      this.absorb(await this.api.back(this.state.sessionId));
    } catch (error) {
      this.warn(error);
    }
  }

  async commit(options: { episode_id?: string; ts?: string; subject?: string } = {}, infer = true): Promise<void> {
    if (this.state.sessionId === null) return;
    try {
      const result = await this.api.commit(this.state.sessionId, options, infer);
      this.render({
        ...this.state,
        status: "committed",
        committedEpisodeId: result.episode_id,
        episodeKeys: result.episode.instances.map((r) => ({
          key: r.key,
          polarity: r.polarity,
        })),
        inferred: result.inferred ?? [],
        warning: null,
      });
    } catch (error) {
      this.warn(error);
    }
  }
}
