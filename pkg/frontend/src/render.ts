// DOM construction for one validation item: rows per suggested value, ranked
// snippet cards inside each row, agreement badges, decision controls, and the
// context pop-up. Cards appear exactly in the order the server delivered the
// groups; the client never re-ranks or filters.

import type { ContextPayload, GroupPayload, ItemPayload } from "./types.js";

export interface ItemHandlers {
  onConfirm(group: GroupPayload): void;
  onReject(group: GroupPayload): void;
  onNoEvidence(): void;
  onManual(value: string): void;
  onContext(group: GroupPayload): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function agreementBadge(agreement: number, lfTotal: number): string {
  return `${agreement}/${lfTotal}`;
}

function card(
  group: GroupPayload,
  rank: number,
  lfTotal: number,
  handlers: ItemHandlers
): HTMLElement {
  const box = el("div", "card");
  box.dataset.groupId = group.group_id;
  box.dataset.rank = String(rank);

  const snippet = el("blockquote", "snippet", group.snippet);
  snippet.title = "Show more context";
  snippet.addEventListener("click", () => handlers.onContext(group));
  box.appendChild(snippet);

  const meta = el("div", "meta");
  meta.appendChild(el("span", "badge", agreementBadge(group.agreement, lfTotal)));
  meta.appendChild(el("span", "confidence", group.confidence.toFixed(2)));
  box.appendChild(meta);

  const actions = el("div", "actions");
  const accept = el("button", "accept", `Accept [${rank}]`);
  accept.dataset.action = "confirm";
  accept.addEventListener("click", () => handlers.onConfirm(group));
  const reject = el("button", "reject", "Reject");
  reject.dataset.action = "reject";
  reject.addEventListener("click", () => handlers.onReject(group));
  actions.append(accept, reject);
  box.appendChild(actions);
  return box;
}

export function renderItem(item: ItemPayload, handlers: ItemHandlers): HTMLElement {
  const root = el("section", "item");
  root.dataset.docId = item.doc_id;
  root.dataset.variableId = item.variable_id;

  const heading = el("header", "item-header");
  heading.appendChild(el("h2", "variable", item.display_name));
  heading.appendChild(el("span", "doc", item.doc_id));
  root.appendChild(heading);

  // one row per suggested value, in order of first appearance; card order
  // within a row preserves the server's global ranking
  const valueOrder: string[] = [];
  for (const group of item.groups) {
    if (!valueOrder.includes(group.value)) valueOrder.push(group.value);
  }
  for (const value of valueOrder) {
    const row = el("div", "value-row");
    row.dataset.value = value;
    row.appendChild(el("h3", "value-name", value));
    const cards = el("div", "cards");
    for (const group of item.groups) {
      if (group.value !== value) continue;
      cards.appendChild(card(group, item.groups.indexOf(group) + 1, item.lf_total, handlers));
    }
    row.appendChild(cards);
    root.appendChild(row);
  }
  if (item.groups.length === 0) {
    root.appendChild(el("p", "no-candidates", "No candidates were nominated."));
  }

  const controls = el("div", "controls");
  const noEvidence = el("button", "no-evidence", "No evidence [n]");
  noEvidence.dataset.action = "no_evidence";
  noEvidence.addEventListener("click", () => handlers.onNoEvidence());
  controls.appendChild(noEvidence);

  const manual = el("div", "manual");
  const select = el("select", "manual-value");
  for (const value of item.label_values) {
    const option = el("option", undefined, value);
    option.value = value;
    select.appendChild(option);
  }
  const manualButton = el("button", "manual-submit", "Enter manually");
  manualButton.dataset.action = "manual";
  manualButton.addEventListener("click", () => handlers.onManual(select.value));
  manual.append(select, manualButton);
  controls.appendChild(manual);
  root.appendChild(controls);
  return root;
}

export function renderContext(context: ContextPayload): HTMLElement {
  const popup = el("div", "context-popup");
  popup.dataset.groupId = context.group_id;
  const text = el("p", "excerpt");
  // mark member spans inside the excerpt without interpreting any markup
  const bounds = [...context.highlights]
    .filter((h) => h.start >= 0 && h.end <= context.excerpt.length && h.start < h.end)
    .sort((a, b) => a.start - b.start);
  let cursor = 0;
  for (const bound of bounds) {
    const start = Math.max(bound.start, cursor);
    if (start >= bound.end) continue;
    if (start > cursor) {
      text.appendChild(document.createTextNode(context.excerpt.slice(cursor, start)));
    }
    const mark = el("mark", "member-span", context.excerpt.slice(start, bound.end));
    text.appendChild(mark);
    cursor = bound.end;
  }
  if (cursor < context.excerpt.length) {
    text.appendChild(document.createTextNode(context.excerpt.slice(cursor)));
  }
  popup.appendChild(text);
  const close = el("button", "close", "Close");
  close.addEventListener("click", () => popup.remove());
  popup.appendChild(close);
  return popup;
}

export function renderDone(): HTMLElement {
  return el("section", "done", "All items reviewed.");
}

export function renderError(message: string): HTMLElement {
  return el("section", "error-banner", message);
}
