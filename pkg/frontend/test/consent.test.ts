// Acceptance: revoking a session disables its control, and after a refresh
// the session renders as opaque.

import { describe, expect, it } from "vitest";

import type { IdentitySession, KeyInfo } from "../src/api.js";
import { ConsentController, mergeRows, renderConsent } from "../src/consent.js";

const FPR1 = "a".repeat(40);
const FPR2 = "b".repeat(40);

const WORDS1 = ["aardvark", "adroitness", "absurd", "adviser"];
const WORDS2 = ["accrue", "aftermath", "acme", "aggregate"];

function fakeApi() {
  const state = {
    revoked: new Set<string>(),
    keys: [
      { fingerprint: FPR1, words: WORDS1, active: false },
      { fingerprint: FPR2, words: WORDS2, active: true },
    ] as KeyInfo[],
    calls: [] as string[],
  };
  const api = {
    state,
    keys: async () => {
      state.calls.push("keys");
      return { keys: state.keys.filter((k) => !state.revoked.has(k.fingerprint)) };
    },
    identity: async () => {
      state.calls.push("identity");
      const sessions: IdentitySession[] = [
        {
          fingerprint: FPR1,
          words: WORDS1,
          status: state.revoked.has(FPR1) ? "opaque" : "open",
          clips: state.revoked.has(FPR1) ? 3 : 3,
          languages: ["br"],
        },
        {
          fingerprint: FPR2,
          words: WORDS2,
          status: state.revoked.has(FPR2) ? "opaque" : "open",
          clips: 2,
          languages: ["br"],
        },
      ];
      return { name: "id", cid: "QmRoot", encrypted: true, sessions };
    },
    rollKey: async () => {
      const fpr = "c".repeat(40);
      state.keys.push({ fingerprint: fpr, words: ["acme"], active: true });
      return { fingerprint: fpr, words: ["acme"] };
    },
    revoke: async (fingerprint: string) => {
      state.calls.push(`revoke:${fingerprint}`);
      state.revoked.add(fingerprint);
      return { root_cid: "QmNewRoot" };
    },
  };
  return api;
}

function revokeButton(html: string, fpr: string): string {
  const match = html.match(new RegExp(`<button class="revoke" data-fpr="${fpr}"[^>]*>`));
  expect(match).not.toBeNull();
  return match![0];
}

describe("consent screen", () => {
  it("lists sessions by word name with clip counts", async () => {
    const ctl = new ConsentController(fakeApi() as never);
    await ctl.refresh();
    const html = renderConsent(ctl.state);
    expect(html).toContain("aardvark adroitness absurd adviser");
    expect(html).toContain("3 clips");
    expect(html).toContain("2 clips");
    expect(html).toContain("active");
  });

  it("confirmation names the number of clips that become opaque", async () => {
    const ctl = new ConsentController(fakeApi() as never);
    await ctl.refresh();
    ctl.beginRevoke(FPR1);
    const html = renderConsent(ctl.state);
    expect(html).toContain("<strong>3</strong> clips opaque");
    expect(html).toContain("confirm-revoke");
  });

  it("revoking disables the control and renders opaque after refresh", async () => {
    const api = fakeApi();
    const ctl = new ConsentController(api as never);
    await ctl.refresh();
    expect(revokeButton(renderConsent(ctl.state), FPR1)).not.toContain("disabled");

    ctl.beginRevoke(FPR1);
    await ctl.confirmRevoke(); // revokes and refreshes
    expect(api.state.calls).toContain(`revoke:${FPR1}`);

    const html = renderConsent(ctl.state);
    expect(revokeButton(html, FPR1)).toContain("disabled");
    expect(html).toMatch(new RegExp(`data-fpr="${FPR1}">[\\s\\S]*?opaque`));
    // the untouched session keeps a live control
    expect(revokeButton(html, FPR2)).not.toContain("disabled");
  });

  it("cancel keeps the key published", async () => {
    const api = fakeApi();
    const ctl = new ConsentController(api as never);
    await ctl.refresh();
    ctl.beginRevoke(FPR1);
    ctl.cancelRevoke();
    expect(ctl.state.pendingRevoke).toBeNull();
    expect(api.state.calls.filter((c) => c.startsWith("revoke"))).toHaveLength(0);
  });

  it("roll creates a new session row", async () => {
    const api = fakeApi();
    const ctl = new ConsentController(api as never);
    await ctl.refresh();
    const before = ctl.state.rows.length;
    await ctl.roll();
    expect(ctl.state.rows.length).toBe(before + 1);
  });

  it("unpublished local keys render without a live revoke control", () => {
    const rows = mergeRows(
      [{ fingerprint: FPR1, words: WORDS1, active: true }],
      [],
    );
    expect(rows[0]!.status).toBe("unpublished");
    const html = renderConsent({ rows, pendingRevoke: null, busy: false, error: null });
    expect(revokeButton(html, FPR1)).toContain("disabled");
  });

  it("identity fetch failure still lists local keys", async () => {
    const api = fakeApi();
    (api as { identity: unknown }).identity = async () => {
      throw new Error("nothing published");
    };
    const ctl = new ConsentController(api as never);
    await ctl.refresh();
    expect(ctl.state.rows.map((r) => r.status)).toEqual(["unpublished", "unpublished"]);
  });
});
