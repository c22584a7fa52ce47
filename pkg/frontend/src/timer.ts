// Answer timing. The clock is injectable so tests can script it; production
// uses the monotonic performance clock, never wall time.

export type Clock = () => number;

export class AnswerTimer {
  private startedAt: number | null = null;

  constructor(private clock: Clock = () => performance.now()) {}

  /** Called when audio playback finishes. The first finish starts the timer;
   * re-listening neither pauses nor restarts it. */
  audioEnded(): void {
    if (this.startedAt === null) {
      this.startedAt = this.clock();
    }
  }

  get running(): boolean {
    return this.startedAt !== null;
  }

  /** Seconds since the first audio end; 0 if the audio never finished. */
  elapsedSeconds(): number {
    if (this.startedAt === null) {
      return 0;
    }
    return Math.max(0, (this.clock() - this.startedAt) / 1000);
  }

  reset(): void {
    this.startedAt = null;
  }
}
