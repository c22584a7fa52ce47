// Consent screen: sessions listed by their word names, roll and revoke.
// Revocation needs a confirmation that spells out how many clips go opaque.

import type { Api, IdentitySession, KeyInfo } from "./api.js";
import { escapeHtml } from "./feedback.js";

export interface SessionRow {
  fingerprint: string;
  words: string[];
  status: "open" | "opaque" | "corrupt" | "unpublished";
  clips: number;
  active: boolean;
  revocable: boolean;
}

export interface ConsentState {
  rows: SessionRow[];
  pendingRevoke: string | null; // fingerprint awaiting confirmation
  busy: boolean;
  error: string | null;
}

type ConsentApi = Pick<Api, "keys" | "identity" | "rollKey" | "revoke">;

export function mergeRows(keys: KeyInfo[], sessions: IdentitySession[]): SessionRow[] {
  const rows = new Map<string, SessionRow>();
  for (const session of sessions) {
    rows.set(session.fingerprint, {
      fingerprint: session.fingerprint,
      words: session.words,
      status: session.status,
      clips: session.clips,
      active: false,
      revocable: session.status === "open",
    });
  }
  for (const key of keys) {
    const row = rows.get(key.fingerprint);
    if (row !== undefined) {
      row.active = key.active;
    } else {
      // locally held key with no published contribution yet
      rows.set(key.fingerprint, {
        fingerprint: key.fingerprint,
        words: key.words,
        status: "unpublished",
        clips: 0,
        active: key.active,
        revocable: false,
      });
    }
  }
  return [...rows.values()].sort((a, b) => a.fingerprint.localeCompare(b.fingerprint));
}

export class ConsentController {
  state: ConsentState = { rows: [], pendingRevoke: null, busy: false, error: null };

  constructor(
    private api: ConsentApi,
    private onChange: (state: ConsentState) => void = () => {},
  ) {}

  private emit(): void {
    this.onChange(this.state);
  }

  async refresh(): Promise<void> {
    this.state = { ...this.state, busy: true, error: null };
    this.emit();
    try {
      const keys = (await this.api.keys()).keys;
      let sessions: IdentitySession[] = [];
      try {
        sessions = (await this.api.identity()).sessions;
      } catch {
        // nothing published yet: only local keys to show
      }
      this.state = { ...this.state, rows: mergeRows(keys, sessions), busy: false };
    } catch (err) {
      this.state = { ...this.state, busy: false, error: String(err) };
    }
    this.emit();
  }

  async roll(): Promise<void> {
    this.state = { ...this.state, busy: true };
    this.emit();
    try {
      await this.api.rollKey();
    } catch (err) {
      this.state = { ...this.state, error: String(err) };
    }
    await this.refresh();
  }

  /** First click arms the confirmation; the prompt names the clip count. */
  beginRevoke(fingerprint: string): void {
    this.state = { ...this.state, pendingRevoke: fingerprint };
    this.emit();
  }

  cancelRevoke(): void {
    this.state = { ...this.state, pendingRevoke: null };
    this.emit();
  }

  async confirmRevoke(): Promise<void> {
    const fingerprint = this.state.pendingRevoke;
    if (fingerprint === null) {
      return;
    }
    this.state = { ...this.state, busy: true, pendingRevoke: null };
    this.emit();
    try {
      await this.api.revoke(fingerprint);
    } catch (err) {
      this.state = { ...this.state, error: String(err) };
    }
    await this.refresh();
  }
}

function wordName(row: SessionRow): string {
  return row.words.slice(0, 4).join(" ");
}

export function renderConsent(state: ConsentState): string {
  const rows = state.rows
    .map((row) => {
      const disabled = row.revocable && !state.busy ? "" : " disabled";
      const confirm =
        state.pendingRevoke === row.fingerprint
          ? `<span class="confirm">unpublishing this key makes ` +
            `<strong>${row.clips}</strong> clip${row.clips === 1 ? "" : "s"} opaque ` +
            `<button class="confirm-revoke" data-fpr="${row.fingerprint}">confirm</button>` +
            `<button class="cancel-revoke">keep</button></span>`
          : "";
      return (
        `<li class="session ${row.status}" data-fpr="${row.fingerprint}">` +
        `<span class="words">${escapeHtml(wordName(row))}</span>` +
        `<span class="status">${row.status}${row.active ? " · active" : ""}</span>` +
        `<span class="clips">${row.clips} clip${row.clips === 1 ? "" : "s"}</span>` +
        `<button class="revoke" data-fpr="${row.fingerprint}"${disabled}>revoke</button>` +
        confirm +
        `</li>`
      );
    })
    .join("");
  const error = state.error ? `<p class="error">${escapeHtml(state.error)}</p>` : "";
  return (
    `${error}<ul class="sessions">${rows}</ul>` +
    `<button id="roll"${state.busy ? " disabled" : ""}>new session key</button>`
  );
}
