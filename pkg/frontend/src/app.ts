/** DOM wiring for the pass-annotation interface.
 *
 * All authoritative state lives on the server; after every save the event
 * list is re-fetched, so a page refresh reconstructs the exact same view.
 */

import { ApiClient, ConflictError, RejectedError } from "./api";
import {
  captureTime,
  formatTime,
  frameStepS,
  toRow,
  validatePair,
} from "./logic";
import type { EventItem, MatchSummary } from "./types";

interface Selection {
  matchId: string;
  half: number;
  fps: number;
}

export class AnnotationApp {
  private readonly api: ApiClient;
  private matches: MatchSummary[] = [];
  private events: EventItem[] = [];
  private selection: Selection | null = null;
  private selectedEventId: string | null = null;
  private pendingStart: number | null = null;
  private pendingEnd: number | null = null;
  private operatorId: string;

  constructor(private readonly root: HTMLElement, api?: ApiClient) {
    this.api = api ?? new ApiClient();
    this.operatorId =
      window.localStorage.getItem("operator-id") ??
      `operator-${Math.random().toString(36).slice(2, 8)}`;
    window.localStorage.setItem("operator-id", this.operatorId);
    this.render();
  }

  // -- bootstrapping ------------------------------------------------------

  async start(): Promise<void> {
    try {
      this.matches = await this.api.listMatches();
    } catch (error) {
      this.banner(`cannot reach the annotation service: ${String(error)}`, "error");
      return;
    }
    this.populateMatchSelect();
    const first = this.matches[0];
    if (first && first.halves.length) {
      await this.selectHalf(first.match_id, first.halves[0].half);
    }
  }

  private populateMatchSelect(): void {
    const select = this.el<HTMLSelectElement>("#match-select");
    select.innerHTML = "";
    for (const match of this.matches) {
      for (const half of match.halves) {
        const option = document.createElement("option");
        option.value = `${match.match_id}::${half.half}`;
        option.textContent = `${match.match_id} / half ${half.half} (${half.event_count} events)`;
        select.appendChild(option);
      }
    }
  }

  private async selectHalf(matchId: string, half: number): Promise<void> {
    const match = this.matches.find((m) => m.match_id === matchId);
    const summary = match?.halves.find((h) => h.half === half);
    if (!match || !summary) {
      return;
    }
    this.selection = { matchId, half, fps: summary.fps };
    this.selectedEventId = null;
    this.pendingStart = null;
    this.pendingEnd = null;

    const video = this.el<HTMLVideoElement>("#player");
    if (summary.has_video) {
      video.src = this.api.videoUrl(matchId, half);
      video.style.opacity = "1";
    } else {
      video.removeAttribute("src");
      video.style.opacity = "0.3";
    }
    this.el<HTMLAnchorElement>("#export-link").href = this.api.exportUrl(matchId, half);
    await this.reloadEvents();
    if (!summary.has_video) {
      this.banner("this half has no video file; tagging still works", "info");
    }
  }

  private async reloadEvents(): Promise<void> {
    if (!this.selection) {
      return;
    }
    try {
      const response = await this.api.listEvents(this.selection.matchId, this.selection.half);
      this.events = response.events;
      this.renderTable();
      this.clearBanner();
    } catch (error) {
      this.banner(`failed to load events: ${String(error)}`, "error", () =>
        this.reloadEvents(),
      );
    }
  }

  // -- rendering ----------------------------------------------------------

  private render(): void {
    this.root.innerHTML = `
      <header>
        <h1>Pass annotation</h1>
        <label>Match
          <select id="match-select"></select>
        </label>
        <a id="export-link" href="#" download>Export CSV</a>
      </header>
      <div id="banner" hidden></div>
      <main>
        <section id="player-pane">
          <video id="player" controls preload="metadata"></video>
          <div id="transport">
            <button id="play-pause">Play</button>
            <button id="back-second" title="back one second">−1s</button>
            <button id="back-frame" title="back one frame">−1f</button>
            <span id="clock">0.00</span>
            <button id="fwd-frame" title="forward one frame">+1f</button>
            <button id="fwd-second" title="forward one second">+1s</button>
          </div>
          <div id="tagging">
            <button id="tag-start">Pass Start <kbd>s</kbd></button>
            <button id="tag-end">Pass End <kbd>e</kbd></button>
            <span id="pending"></span>
            <button id="save" disabled>Save <kbd>↵</kbd></button>
          </div>
        </section>
        <section id="table-pane">
          <table>
            <thead>
              <tr><th>event</th><th>reference</th><th>start</th><th>end</th></tr>
            </thead>
            <tbody id="event-rows"></tbody>
          </table>
        </section>
      </main>
    `;
    this.wireControls();
  }

  private renderTable(): void {
    const body = this.el<HTMLTableSectionElement>("#event-rows");
    body.innerHTML = "";
    for (const event of this.events) {
      const row = toRow(event);
      const tr = document.createElement("tr");
      tr.dataset.eventId = row.eventId;
      tr.className = row.annotated ? "annotated" : "unannotated";
      if (row.eventId === this.selectedEventId) {
        tr.classList.add("selected");
      }
      tr.innerHTML = `
        <td>${row.eventId}</td>
        <td>${row.referenceLabel}</td>
        <td>${this.selectedEventId === row.eventId && this.pendingStart !== null
          ? `<em>${formatTime(this.pendingStart)}</em>`
          : row.startLabel}</td>
        <td>${this.selectedEventId === row.eventId && this.pendingEnd !== null
          ? `<em>${formatTime(this.pendingEnd)}</em>`
          : row.endLabel}</td>
      `;
      tr.addEventListener("click", () => this.selectEvent(row.eventId));
      body.appendChild(tr);
    }
  }

  private selectEvent(eventId: string): void {
    const event = this.events.find((e) => e.event_id === eventId);
    if (!event) {
      return;
    }
    this.selectedEventId = eventId;
    this.pendingStart = null;
    this.pendingEnd = null;
    const video = this.el<HTMLVideoElement>("#player");
    video.currentTime = toRow(event).seekToS;
    this.renderTable();
    this.updateTagging();
  }

  // -- controls -----------------------------------------------------------

  private wireControls(): void {
    const video = this.el<HTMLVideoElement>("#player");
    const select = this.el<HTMLSelectElement>("#match-select");

    select.addEventListener("change", () => {
      const [matchId, half] = select.value.split("::");
      void this.selectHalf(matchId, Number(half));
    });

    this.el("#play-pause").addEventListener("click", () => {
      if (video.paused) {
        void video.play();
      } else {
        video.pause();
      }
    });
    video.addEventListener("play", () => (this.el("#play-pause").textContent = "Pause"));
    video.addEventListener("pause", () => (this.el("#play-pause").textContent = "Play"));
    video.addEventListener("timeupdate", () => {
      this.el("#clock").textContent = formatTime(video.currentTime);
    });

    const nudge = (delta: number) => {
      video.currentTime = Math.max(0, video.currentTime + delta);
      this.el("#clock").textContent = formatTime(video.currentTime);
    };
    this.el("#back-second").addEventListener("click", () => nudge(-1));
    this.el("#fwd-second").addEventListener("click", () => nudge(1));
    this.el("#back-frame").addEventListener("click", () => nudge(-this.currentFrameStep()));
    this.el("#fwd-frame").addEventListener("click", () => nudge(this.currentFrameStep()));

    this.el("#tag-start").addEventListener("click", () => this.tag("start"));
    this.el("#tag-end").addEventListener("click", () => this.tag("end"));
    this.el("#save").addEventListener("click", () => void this.save());

    document.addEventListener("keydown", (keyEvent) => {
      if (keyEvent.target instanceof HTMLInputElement) {
        return;
      }
      if (keyEvent.key === "s") {
        this.tag("start");
      } else if (keyEvent.key === "e") {
        this.tag("end");
      } else if (keyEvent.key === "Enter") {
        void this.save();
      } else if (keyEvent.key === " ") {
        keyEvent.preventDefault();
        this.el<HTMLButtonElement>("#play-pause").click();
      } else if (keyEvent.key === "ArrowLeft") {
        nudge(-this.currentFrameStep());
      } else if (keyEvent.key === "ArrowRight") {
        nudge(this.currentFrameStep());
      }
    });
  }

  private currentFrameStep(): number {
    return frameStepS(this.selection?.fps ?? 5);
  }

  private tag(which: "start" | "end"): void {
    if (!this.selectedEventId) {
      this.banner("select an event row first", "info");
      return;
    }
    const video = this.el<HTMLVideoElement>("#player");
    const time = captureTime(video.currentTime);
    if (which === "start") {
      this.pendingStart = time;
    } else {
      this.pendingEnd = time;
    }
    this.renderTable();
    this.updateTagging();
  }

  private updateTagging(): void {
    const save = this.el<HTMLButtonElement>("#save");
    const pending = this.el("#pending");
    const problem = validatePair(this.pendingStart, this.pendingEnd);
    const dirty = this.pendingStart !== null || this.pendingEnd !== null;
    save.disabled = !dirty || problem !== null;
    if (problem && dirty) {
      pending.textContent = problem;
      pending.className = "invalid";
    } else if (dirty) {
      pending.textContent = `pending: ${formatTime(this.pendingStart)} → ${formatTime(this.pendingEnd)}`;
      pending.className = "";
    } else {
      pending.textContent = "";
      pending.className = "";
    }
  }

  private async save(): Promise<void> {
    if (!this.selection || !this.selectedEventId) {
      return;
    }
    const event = this.events.find((e) => e.event_id === this.selectedEventId);
    if (!event) {
      return;
    }
    // Merge pending captures over what the server already has.
    const startS = this.pendingStart ?? event.annotation?.pass_start_s ?? null;
    const endS = this.pendingEnd ?? event.annotation?.pass_end_s ?? null;
    const problem = validatePair(startS, endS);
    if (problem) {
      this.banner(problem, "error");
      return;
    }
    try {
      await this.api.putAnnotation(
        this.selection.matchId,
        this.selection.half,
        this.selectedEventId,
        startS,
        endS,
        event.annotation?.revision ?? 0,
        this.operatorId,
      );
      this.pendingStart = null;
      this.pendingEnd = null;
      await this.reloadEvents();
      this.updateTagging();
    } catch (error) {
      if (error instanceof ConflictError) {
        this.banner(
          "someone else saved this event first; reload to get their version",
          "error",
          () => this.reloadEvents(),
          "Reload",
        );
      } else if (error instanceof RejectedError) {
        this.banner(`the server rejected the annotation: ${error.message}`, "error");
      } else {
        // Network failure: keep the pending tags so the operator can retry.
        this.banner(`save failed: ${String(error)}`, "error", () => this.save(), "Retry");
      }
    }
  }

  // -- chrome -------------------------------------------------------------

  private banner(
    message: string,
    kind: "info" | "error",
    action?: () => unknown,
    actionLabel = "Retry",
  ): void {
    const banner = this.el("#banner");
    banner.hidden = false;
    banner.className = kind;
    banner.textContent = message;
    if (action) {
      const button = document.createElement("button");
      button.textContent = actionLabel;
      button.addEventListener("click", () => {
        this.clearBanner();
        void action();
      });
      banner.appendChild(button);
    }
  }

  private clearBanner(): void {
    const banner = this.el("#banner");
    banner.hidden = true;
    banner.textContent = "";
  }

  private el<T extends HTMLElement = HTMLElement>(selector: string): T {
    const node = this.root.querySelector<T>(selector);
    if (!node) {
      throw new Error(`missing element ${selector}`);
    }
    return node;
  }
}

const rootElement = document.getElementById("app");
if (rootElement) {
  const app = new AnnotationApp(rootElement);
  void app.start();
}
