// Typed client for the service API. All consent cryptography happens server
// side; this file only moves JSON.

export interface SessionState {
  level: number;
  score: number;
  remaining: number;
}

export interface TaskView {
  task_id: string;
  clip_cid: string;
  length: number;
  tokens: (string | null)[];
  tags: string[];
  gap_index: number;
}

export interface AnswerResult {
  correct: boolean;
  expected: string;
  level_complete: boolean;
  level_passed: boolean | null;
  score_delta: number;
  state: SessionState;
}

export interface FeedbackSegment {
  start: number;
  text: string;
  gap_len: number;
  intensity: number;
}

export interface KeyInfo {
  fingerprint: string;
  words: string[];
  active: boolean;
}

export interface IdentitySession {
  fingerprint: string;
  words: string[];
  status: "open" | "opaque" | "corrupt";
  clips: number;
  languages: string[];
}

export interface IdentityView {
  name: string;
  cid: string;
  encrypted: boolean;
  sessions: IdentitySession[];
}

export interface RootEntry {
  cids: string[];
  meta: string;
}

export type Fetcher = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(detail);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let code = "http_error";
    let detail = `HTTP ${resp.status}`;
    try {
      const body = (await resp.json()) as { error?: string; detail?: string };
      code = body.error ?? code;
      detail = body.detail ?? detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, code, detail);
  }
  return (await resp.json()) as T;
}

export class Api {
  constructor(
    private fetcher: Fetcher = (input, init) => fetch(input, init),
    private base = "",
  ) {}

  private get(path: string): Promise<Response> {
    return this.fetcher(this.base + path);
  }

  private post(path: string, body?: unknown): Promise<Response> {
    return this.fetcher(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? "{}" : JSON.stringify(body),
    });
  }

  root(): Promise<Record<string, RootEntry>> {
    return this.get("/api/root").then((r) => asJson(r));
  }

  audioUrl(cid: string): string {
    return `${this.base}/api/block/${cid}`;
  }

  openSession(
    language: string,
    bucket: number,
    seed?: number,
  ): Promise<{ token: string; state: SessionState }> {
    return this.post("/api/session", { language, bucket, seed }).then((r) => asJson(r));
  }

  task(token: string): Promise<{ task: TaskView; state: SessionState }> {
    return this.get(`/api/session/${token}/task`).then((r) => asJson(r));
  }

  answer(token: string, answer: string, elapsed: number): Promise<AnswerResult> {
    return this.post(`/api/session/${token}/answer`, { answer, elapsed }).then((r) =>
      asJson(r),
    );
  }

  discard(token: string): Promise<{ replaced: boolean; state: SessionState }> {
    return this.post(`/api/session/${token}/discard`).then((r) => asJson(r));
  }

  skip(token: string): Promise<{ state: SessionState }> {
    return this.post(`/api/session/${token}/skip`).then((r) => asJson(r));
  }

  feedback(reference: string, hypothesis: string): Promise<FeedbackSegment[]> {
    return this.post("/api/feedback", { reference, hypothesis }).then((r) => asJson(r));
  }

  keys(): Promise<{ keys: KeyInfo[] }> {
    return this.get("/api/keys").then((r) => asJson(r));
  }

  rollKey(): Promise<{ fingerprint: string; words: string[] }> {
    return this.post("/api/keys/roll").then((r) => asJson(r));
  }

  revoke(fingerprint: string): Promise<{ root_cid: string }> {
    return this.post("/api/revoke", { fingerprint }).then((r) => asJson(r));
  }

  identity(): Promise<IdentityView> {
    return this.get("/api/identity").then((r) => asJson(r));
  }

  contribute(audio: Blob, sentenceCid: string): Promise<{ root_cid: string; fingerprint: string }> {
    const form = new FormData();
    form.append("audio", audio, "recording.webm");
    form.append("sentence_cid", sentenceCid);
    return this.fetcher(`${this.base}/api/contribute`, {
      method: "POST",
      body: form,
    }).then((r) => asJson(r));
  }
}
