// Application wiring: fetch -> render -> decide -> submit -> next.
//
// Submissions carry a client-generated record id and survive network
// failures in an outbox queue; retries reuse the same id, so the server's
// dedupe gives exactly-once semantics. A 409 means another annotator (or an
// earlier retry) won the item: the current view is refreshed instead of
// retried. Wall time is measured from render to decision.

import { ApiClient } from "./api.js";
import {
  renderContext,
  renderDone,
  renderError,
  renderItem,
  type ItemHandlers,
} from "./render.js";
import {
  isItem,
  isValidItemPayload,
  type Decision,
  type GroupPayload,
  type ItemPayload,
  type ValidationBody,
} from "./types.js";

export interface AppOptions {
  annotatorId?: string;
  now?: () => number;
  makeRecordId?: () => string;
}

function defaultRecordId(): string {
  const rand = Math.random().toString(16).slice(2, 10);
  return `ui-${Date.now().toString(16)}-${rand}`;
}

export class ValidationApp {
  private readonly annotatorId: string;
  private readonly now: () => number;
  private readonly makeRecordId: () => string;
  private current: ItemPayload | null = null;
  private renderedAt = 0;
  private outbox: ValidationBody[] = [];
  private flushing = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    options: AppOptions = {}
  ) {
    this.annotatorId = options.annotatorId ?? "default";
    this.now = options.now ?? (() => Date.now());
    this.makeRecordId = options.makeRecordId ?? defaultRecordId;
  }

  start(): Promise<void> {
    document.addEventListener("keydown", (event) => this.onKey(event));
    window.addEventListener("online", () => void this.flush());
    return this.loadNext();
  }

  get pendingSubmissions(): readonly ValidationBody[] {
    return this.outbox;
  }

  async loadNext(): Promise<void> {
    let payload: unknown;
    try {
      payload = await this.api.nextItem(this.annotatorId);
    } catch (error) {
      this.show(renderError(`Cannot reach the server: ${String(error)}`));
      return;
    }
    if (!isValidItemPayload(payload)) {
      this.current = null;
      this.show(renderError("The server sent an item this client does not understand."));
      return;
    }
    if (!isItem(payload)) {
      this.current = null;
      this.show(renderDone());
      return;
    }
    this.current = payload;
    this.show(renderItem(payload, this.handlers()));
    this.renderedAt = this.now();
  }

  private show(view: HTMLElement): void {
    this.root.replaceChildren(view);
  }

  private handlers(): ItemHandlers {
    return {
      onConfirm: (group) => void this.decide("confirm", group),
      onReject: (group) => void this.decide("reject", group),
      onNoEvidence: () => void this.decide("no_evidence", null),
      onManual: (value) => void this.decide("manual", null, value),
      onContext: (group) => void this.openContext(group),
    };
  }

  private async openContext(group: GroupPayload): Promise<void> {
    try {
      const context = await this.api.context(group.group_id);
      this.root.appendChild(renderContext(context));
    } catch (error) {
      this.root.appendChild(renderError(`Context unavailable: ${String(error)}`));
    }
  }

  async decide(decision: Decision, group: GroupPayload | null, value?: string): Promise<void> {
    if (this.current === null) return;
    const body: ValidationBody = {
      record_id: this.makeRecordId(),
      doc_id: this.current.doc_id,
      variable_id: this.current.variable_id,
      group_id: group ? group.group_id : "MANUAL",
      decision,
      annotator_id: this.annotatorId,
      wall_time_ms: Math.max(0, Math.round(this.now() - this.renderedAt)),
      timestamp: this.now() / 1000,
      value: value ?? null,
    };
    this.outbox.push(body);
    await this.flush();
  }

  async flush(): Promise<void> {
    if (this.flushing) return;
    this.flushing = true;
    try {
      while (this.outbox.length > 0) {
        const head = this.outbox[0];
        let result;
        try {
          result = await this.api.submitValidation(head);
        } catch {
          // offline: keep the record queued (same record_id on retry) and
          // surface a banner without losing the current view
          this.root.appendChild(
            renderError("Submission queued; it will be retried when the connection returns.")
          );
          return;
        }
        this.outbox.shift();
        if (result.stale) {
          await this.loadNext(); // someone else validated it; resync
          continue;
        }
        if (!result.ok) {
          this.root.appendChild(renderError(`The server rejected the decision (${result.status}).`));
          continue;
        }
        if (head.decision !== "reject") {
          await this.loadNext();
        }
      }
    } finally {
      this.flushing = false;
    }
  }

  private onKey(event: KeyboardEvent): void {
    if (this.current === null) return;
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "SELECT")) return;
    if (event.key >= "1" && event.key <= "9") {
      const rank = Number(event.key);
      const group = this.current.groups[rank - 1];
      if (group) void this.decide("confirm", group);
    } else if (event.key === "n") {
      void this.decide("no_evidence", null);
    }
  }
}
