import { beforeEach, describe, expect, it, vi } from "vitest";

import { agreementBadge, renderContext, renderError, renderItem } from "../src/render.js";
import type { ItemHandlers, } from "../src/render.js";
import { isValidItemPayload } from "../src/types.js";
import { contextGolden, FIXTURE_DOC_TEXT, item3of5Golden, itemGolden } from "./fixtures.js";

function handlers(): ItemHandlers {
  return {
    onConfirm: vi.fn(),
    onReject: vi.fn(),
    onNoEvidence: vi.fn(),
    onManual: vi.fn(),
    onContext: vi.fn(),
  };
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("renderItem", () => {
  it("renders cards in exactly the server's order", () => {
    const view = renderItem(item3of5Golden, handlers());
    const ids = [...view.querySelectorAll<HTMLElement>(".card")].map(
      (card) => card.dataset.groupId
    );
    expect(ids).toEqual(item3of5Golden.groups.map((g) => g.group_id));
  });

  it("shows the agreement badge straight from the API field", () => {
    const view = renderItem(item3of5Golden, handlers());
    const badges = [...view.querySelectorAll(".badge")].map((b) => b.textContent);
    // three out of five labeling functions agree on the top explanation
    expect(badges[0]).toBe("3/5");
    expect(badges).toEqual(item3of5Golden.groups.map((g) => `${g.agreement}/5`));
    expect(agreementBadge(3, 5)).toBe("3/5");
  });

  it("groups cards into one row per suggested value", () => {
    const view = renderItem(itemGolden, handlers());
    const rows = [...view.querySelectorAll<HTMLElement>(".value-row")];
    expect(rows.map((r) => r.dataset.value)).toEqual(["Male", "Female"]);
    const maleCards = rows[0].querySelectorAll(".card");
    expect(maleCards).toHaveLength(1);
  });

  it("shows only snippets, never the rest of the document", () => {
    const view = renderItem(itemGolden, handlers());
    const text = view.textContent ?? "";
    for (const group of itemGolden.groups) {
      expect(text).toContain(group.snippet);
    }
    expect(text).not.toContain(FIXTURE_DOC_TEXT);
    expect(text).not.toContain("was found"); // unrequested context stays hidden
  });

  it("offers only no-evidence and manual controls when there are no groups", () => {
    const empty = { ...itemGolden, groups: [] };
    const view = renderItem(empty, handlers());
    expect(view.querySelectorAll(".card")).toHaveLength(0);
    expect(view.querySelector(".no-evidence")).not.toBeNull();
    expect(view.querySelector(".manual-submit")).not.toBeNull();
    expect(view.querySelector(".no-candidates")).not.toBeNull();
  });

  it("wires decision controls to the handlers", () => {
    const h = handlers();
    const view = renderItem(itemGolden, h);
    view.querySelector<HTMLButtonElement>(".card .accept")!.click();
    expect(h.onConfirm).toHaveBeenCalledWith(itemGolden.groups[0]);
    view.querySelector<HTMLButtonElement>(".no-evidence")!.click();
    expect(h.onNoEvidence).toHaveBeenCalled();
    view.querySelector<HTMLButtonElement>(".manual-submit")!.click();
    expect(h.onManual).toHaveBeenCalledWith("Male");
  });

  it("opens the context pop-up from the snippet", () => {
    const h = handlers();
    const view = renderItem(itemGolden, h);
    view.querySelector<HTMLElement>(".card .snippet")!.click();
    expect(h.onContext).toHaveBeenCalledWith(itemGolden.groups[0]);
  });

  it("manual select offers every schema value", () => {
    const view = renderItem(itemGolden, handlers());
    const options = [...view.querySelectorAll<HTMLOptionElement>(".manual-value option")];
    expect(options.map((o) => o.value)).toEqual(itemGolden.label_values);
  });
});

describe("renderContext", () => {
  it("marks the member spans inside the excerpt", () => {
    const popup = renderContext(contextGolden);
    expect(popup.querySelector(".excerpt")!.textContent).toBe(contextGolden.excerpt);
    const marks = [...popup.querySelectorAll("mark")];
    expect(marks.length).toBeGreaterThan(0);
    const first = contextGolden.highlights[0];
    expect(marks[0].textContent).toBe(contextGolden.excerpt.slice(first.start, first.end));
  });

  it("close button removes the pop-up", () => {
    const popup = renderContext(contextGolden);
    document.body.appendChild(popup);
    popup.querySelector<HTMLButtonElement>(".close")!.click();
    expect(document.querySelector(".context-popup")).toBeNull();
  });
});

describe("payload validation", () => {
  it("accepts the golden payloads", () => {
    expect(isValidItemPayload(itemGolden)).toBe(true);
    expect(isValidItemPayload(item3of5Golden)).toBe(true);
    expect(isValidItemPayload({ done: true })).toBe(true);
  });

  it("rejects malformed payloads", () => {
    expect(isValidItemPayload(null)).toBe(false);
    expect(isValidItemPayload({ done: false })).toBe(false);
    expect(isValidItemPayload({ ...itemGolden, groups: [{ nope: 1 }] })).toBe(false);
  });

  it("renderError produces a banner, not a crash", () => {
    const banner = renderError("bad payload");
    expect(banner.className).toBe("error-banner");
    expect(banner.textContent).toBe("bad payload");
  });
});
