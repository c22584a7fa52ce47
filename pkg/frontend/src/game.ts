// Task-screen state machine. Indicators always mirror the last server
// response; the timer starts when audio playback first finishes.

import type { AnswerResult, Api, SessionState, TaskView } from "./api.js";
import { escapeHtml } from "./feedback.js";
import { AnswerTimer } from "./timer.js";

export type GamePhase = "idle" | "loading" | "answering" | "answered" | "error";

export interface GameViewState {
  phase: GamePhase;
  token: string | null;
  language: string | null;
  task: TaskView | null;
  state: SessionState | null; // last server-reported L/S/R
  input: string;
  result: AnswerResult | null;
  levelNotice: string | null;
  error: string | null;
}

type GameApi = Pick<Api, "openSession" | "task" | "answer" | "discard" | "skip" | "audioUrl">;

export class GameController {
  state: GameViewState = {
    phase: "idle",
    token: null,
    language: null,
    task: null,
    state: null,
    input: "",
    result: null,
    levelNotice: null,
    error: null,
  };

  constructor(
    private api: GameApi,
    public timer: AnswerTimer = new AnswerTimer(),
    private onChange: (state: GameViewState) => void = () => {},
  ) {}

  private emit(): void {
    this.onChange(this.state);
  }

  private fail(err: unknown): void {
    // keep token/task/input so a retry never loses state
    this.state = { ...this.state, phase: "error", error: String(err) };
    this.emit();
  }

  async start(language: string, bucket: number, seed?: number): Promise<void> {
    this.state = { ...this.state, phase: "loading", language, error: null };
    this.emit();
    try {
      const opened = await this.api.openSession(language, bucket, seed);
      this.state = { ...this.state, token: opened.token, state: opened.state };
      await this.loadTask();
    } catch (err) {
      this.fail(err);
    }
  }

  async loadTask(): Promise<void> {
    const token = this.state.token;
    if (token === null) {
      return;
    }
    this.state = { ...this.state, phase: "loading", result: null, input: "", error: null };
    this.emit();
    try {
      const got = await this.api.task(token);
      this.timer.reset();
      this.state = {
        ...this.state,
        phase: "answering",
        task: got.task,
        state: got.state,
      };
    } catch (err) {
      this.fail(err);
      return;
    }
    this.emit();
  }

  /** Wire to the audio element's `ended` event; replays are free. */
  audioEnded(): void {
    this.timer.audioEnded();
  }

  setInput(input: string): void {
    this.state = { ...this.state, input };
    this.emit();
  }

  async submit(): Promise<void> {
    if (this.state.token === null || this.state.task === null) {
      return;
    }
    const elapsed = this.timer.elapsedSeconds();
    try {
      const result = await this.api.answer(this.state.token, this.state.input, elapsed);
      this.state = {
        ...this.state,
        phase: "answered",
        result,
        state: result.state,
        levelNotice: result.level_complete
          ? result.level_passed
            ? `level passed, +${result.score_delta.toFixed(1)}`
            : "level failed, try again"
          : null,
      };
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  async next(): Promise<void> {
    await this.loadTask();
  }

  async discard(): Promise<void> {
    if (this.state.token === null) {
      return;
    }
    try {
      await this.api.discard(this.state.token);
      await this.loadTask();
    } catch (err) {
      this.fail(err);
    }
  }

  async skip(): Promise<void> {
    if (this.state.token === null) {
      return;
    }
    try {
      await this.api.skip(this.state.token);
      await this.loadTask();
    } catch (err) {
      this.fail(err);
    }
  }

  async retry(): Promise<void> {
    if (this.state.task !== null) {
      // transient failure mid-task: go back to answering with input intact
      this.state = { ...this.state, phase: "answering", error: null };
      this.emit();
      return;
    }
    await this.loadTask();
  }
}

function renderTokens(task: TaskView, result: AnswerResult | null, input: string): string {
  const parts: string[] = [];
  task.tokens.forEach((token, index) => {
    if (index === task.gap_index) {
      if (result === null) {
        parts.push(
          `<input id="gap" class="gap" autocomplete="off" value="${escapeHtml(input)}">`,
        );
      } else if (result.correct) {
        parts.push(`<span class="gap-correct">${escapeHtml(result.expected)}</span>`);
      } else {
        // wrong answer: show the corrected token, highlighted
        parts.push(`<span class="gap-correction">${escapeHtml(result.expected)}</span>`);
      }
    } else if (token !== null) {
      parts.push(`<span class="token">${escapeHtml(token)}</span>`);
    }
  });
  return parts.join(" ");
}

export function renderIndicators(state: SessionState | null): string {
  if (state === null) {
    return "";
  }
  return (
    `<footer class="indicators">` +
    `<span class="level">L: ${state.level}</span>` +
    `<span class="score">S: ${state.score.toFixed(1)}</span>` +
    `<span class="remaining">R: ${state.remaining}</span>` +
    `</footer>`
  );
}

export function renderTask(view: GameViewState, audioUrl: (cid: string) => string): string {
  if (view.phase === "idle") {
    return `<p class="hint">pick a language to start</p>`;
  }
  if (view.phase === "loading") {
    return `<p class="hint">loading…</p>`;
  }
  if (view.phase === "error") {
    return (
      `<p class="error">${escapeHtml(view.error ?? "request failed")}</p>` +
      `<button id="retry">retry</button>` +
      renderIndicators(view.state)
    );
  }
  const task = view.task;
  if (task === null) {
    return "";
  }
  const controls =
    view.phase === "answered"
      ? `<button id="next">next clip</button>`
      : `<button id="check">check</button>` +
        `<button id="skip" title="skip">&gt;</button>` +
        `<button id="discard" title="discard">discard</button>`;
  const verdict =
    view.result === null
      ? ""
      : view.result.correct
        ? `<p class="verdict ok">correct</p>`
        : `<p class="verdict no">corrected to ` +
          `<strong>${escapeHtml(view.result.expected)}</strong></p>`;
  const notice = view.levelNotice ? `<p class="notice">${escapeHtml(view.levelNotice)}</p>` : "";
  return (
    `<audio id="clip" src="${audioUrl(task.clip_cid)}" preload="auto"></audio>` +
    `<button id="play" class="play">&#9654; play</button>` +
    `<p class="sentence">${renderTokens(task, view.result, view.input)}</p>` +
    verdict +
    notice +
    controls +
    renderIndicators(view.state)
  );
}
