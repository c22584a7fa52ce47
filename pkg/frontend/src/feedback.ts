// Rendering of pronunciation-feedback segments: reference text with red
// spans whose brightness grows with the normalized gap intensity.

import type { Api, FeedbackSegment } from "./api.js";

export interface Span {
  start: number;
  end: number;
  text: string;
  intensity: number;
  brightness: number;
}

/** Monotone map from intensity (0, 1] to a visible alpha in [0.3, 1]. */
export function brightness(intensity: number): number {
  const clamped = Math.min(1, Math.max(0, intensity));
  return 0.3 + 0.7 * clamped;
}

export function spanColor(intensity: number): string {
  return `rgba(229,57,53,${brightness(intensity).toFixed(3)})`;
}

/** Order segments and guarantee they never overlap (later spans are clipped
 * if a malformed server ever sent overlapping ones). */
export function layoutSpans(reference: string, segments: FeedbackSegment[]): Span[] {
  const ordered = [...segments].sort((a, b) => a.start - b.start);
  const spans: Span[] = [];
  let cursor = 0;
  for (const seg of ordered) {
    const start = Math.max(seg.start, cursor);
    const end = Math.min(seg.start + seg.gap_len, reference.length);
    if (end <= start) {
      continue;
    }
    spans.push({
      start,
      end,
      text: reference.slice(start, end),
      intensity: seg.intensity,
      brightness: brightness(seg.intensity),
    });
    cursor = end;
  }
  return spans;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Reference text as HTML, feedback spans wrapped and colored. */
export function renderFeedback(reference: string, segments: FeedbackSegment[]): string {
  const spans = layoutSpans(reference, segments);
  const parts: string[] = [];
  let cursor = 0;
  for (const span of spans) {
    parts.push(escapeHtml(reference.slice(cursor, span.start)));
    parts.push(
      `<span class="fb" data-brightness="${span.brightness.toFixed(3)}" ` +
        `style="background-color:${spanColor(span.intensity)}">` +
        `${escapeHtml(span.text)}</span>`,
    );
    cursor = span.end;
  }
  parts.push(escapeHtml(reference.slice(cursor)));
  return `<p class="feedback-text">${parts.join("")}</p>`;
}

export type FeedbackPhase = "idle" | "recording" | "waiting" | "shown" | "error";

export interface FeedbackState {
  phase: FeedbackPhase;
  reference: string;
  hypothesis: string;
  demoMode: boolean; // typed hypothesis instead of microphone capture
  segments: FeedbackSegment[] | null;
  error: string | null;
}

export class FeedbackController {
  state: FeedbackState;

  constructor(
    private api: Pick<Api, "feedback">,
    private onChange: (state: FeedbackState) => void = () => {},
    reference = "",
    demoMode = false,
  ) {
    this.state = {
      phase: "idle",
      reference,
      hypothesis: "",
      demoMode,
      segments: null,
      error: null,
    };
  }

  private emit(): void {
    this.onChange(this.state);
  }

  setReference(reference: string): void {
    this.state = { ...this.state, reference, segments: null, phase: "idle" };
    this.emit();
  }

  setHypothesis(hypothesis: string): void {
    this.state = { ...this.state, hypothesis };
    this.emit();
  }

  enableDemoMode(): void {
    // offered when the microphone is unavailable
    this.state = { ...this.state, demoMode: true };
    this.emit();
  }

  async requestFeedback(): Promise<void> {
    this.state = { ...this.state, phase: "waiting", error: null };
    this.emit();
    try {
      const segments = await this.api.feedback(this.state.reference, this.state.hypothesis);
      this.state = { ...this.state, phase: "shown", segments };
    } catch (err) {
      this.state = { ...this.state, phase: "error", error: String(err) };
    }
    this.emit();
  }
}
