// DOM wiring: three screens (practice, feedback, consent) over the service
// API. Level/score mirror lives in localStorage for display continuity; the
// server stays authoritative.

import { Api } from "./api.js";
import { ConsentController, renderConsent } from "./consent.js";
import { FeedbackController, renderFeedback } from "./feedback.js";
import { GameController, renderTask } from "./game.js";
import { captureSupported, MicRecorder } from "./recorder.js";

const api = new Api();

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

// ---------------------------------------------------------------------------
// navigation

const screens = ["practice", "feedback", "consent"] as const;

function show(name: (typeof screens)[number]): void {
  for (const screen of screens) {
    el(`screen-${screen}`).hidden = screen !== name;
    el(`nav-${screen}`).classList.toggle("current", screen === name);
  }
}

// ---------------------------------------------------------------------------
// practice screen

const game = new GameController(api, undefined, (state) => {
  const host = el<HTMLDivElement>("screen-practice");
  host.innerHTML = renderTask(state, (cid) => api.audioUrl(cid));
  if (state.state !== null) {
    localStorage.setItem(
      "lingtrove-progress",
      JSON.stringify({ level: state.state.level, score: state.state.score }),
    );
  }
  const play = document.getElementById("play");
  const audio = document.getElementById("clip") as HTMLAudioElement | null;
  if (play && audio) {
    play.addEventListener("click", () => void audio.play());
    audio.addEventListener("ended", () => game.audioEnded());
  }
  const gap = document.getElementById("gap") as HTMLInputElement | null;
  if (gap) {
    gap.addEventListener("input", () => {
      game.state.input = gap.value; // no re-render while typing
    });
    gap.addEventListener("keydown", (event) => {
      if (event.key === "Enter") {
        void game.submit();
      }
    });
    gap.focus();
  }
  document.getElementById("check")?.addEventListener("click", () => void game.submit());
  document.getElementById("next")?.addEventListener("click", () => void game.next());
  document.getElementById("skip")?.addEventListener("click", () => void game.skip());
  document.getElementById("discard")?.addEventListener("click", () => void game.discard());
  document.getElementById("retry")?.addEventListener("click", () => void game.retry());
});

async function startPractice(): Promise<void> {
  const languages = Object.keys(await api.root());
  const language = languages[0];
  if (language === undefined) {
    el("screen-practice").textContent = "catalogue is empty";
    return;
  }
  await game.start(language, 0);
}

// ---------------------------------------------------------------------------
// feedback screen

const recorder = new MicRecorder();

const feedbackCtl = new FeedbackController(
  api,
  (state) => {
    const out = el<HTMLDivElement>("feedback-result");
    out.innerHTML =
      state.phase === "shown" && state.segments !== null
        ? renderFeedback(state.reference, state.segments)
        : state.phase === "error"
          ? `<p class="error">${state.error ?? "failed"}</p>`
          : "";
    el<HTMLDivElement>("feedback-demo").hidden = !state.demoMode;
  },
  "",
  !captureSupported(), // microphone unavailable: offer the typed demo mode
);

function wireFeedback(): void {
  const reference = el<HTMLInputElement>("feedback-reference");
  reference.addEventListener("input", () => feedbackCtl.setReference(reference.value));
  const typed = el<HTMLInputElement>("feedback-hypothesis");
  typed.addEventListener("input", () => feedbackCtl.setHypothesis(typed.value));
  let recording = false;
  const record = el<HTMLButtonElement>("feedback-record");
  record.disabled = !recorder.supported;
  record.addEventListener("click", () => {
    void (async () => {
      if (!recording) {
        try {
          await recorder.start();
          recording = true;
          record.textContent = "stop";
        } catch {
          feedbackCtl.enableDemoMode(); // microphone refused
        }
      } else {
        await recorder.stop(); // recording stays client-side
        recording = false;
        record.textContent = "record";
      }
    })();
  });
  el("feedback-go").addEventListener("click", () => void feedbackCtl.requestFeedback());
}

// ---------------------------------------------------------------------------
// consent screen

const consentCtl = new ConsentController(api, (state) => {
  const host = el<HTMLDivElement>("consent-body");
  host.innerHTML = renderConsent(state);
  host.querySelectorAll<HTMLButtonElement>("button.revoke").forEach((button) => {
    button.addEventListener("click", () => consentCtl.beginRevoke(button.dataset.fpr ?? ""));
  });
  host
    .querySelector("button.confirm-revoke")
    ?.addEventListener("click", () => void consentCtl.confirmRevoke());
  host
    .querySelector("button.cancel-revoke")
    ?.addEventListener("click", () => consentCtl.cancelRevoke());
  host.querySelector("#roll")?.addEventListener("click", () => void consentCtl.roll());
});

// ---------------------------------------------------------------------------

export function boot(): void {
  el("nav-practice").addEventListener("click", () => {
    show("practice");
    if (game.state.phase === "idle") {
      void startPractice();
    }
  });
  el("nav-feedback").addEventListener("click", () => show("feedback"));
  el("nav-consent").addEventListener("click", () => {
    show("consent");
    void consentCtl.refresh();
  });
  wireFeedback();
  show("practice");
  void startPractice();
}

if (typeof document !== "undefined" && document.getElementById("nav-practice")) {
  boot();
}
