// Golden payloads are shared with the server test suite: the files under
// tests/fixtures/api are produced by the API and consumed verbatim here.

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";

import type { ItemPayload, ValidationBody } from "../src/types.js";

function load(name: string): unknown {
  const path = fileURLToPath(new URL(`../../tests/fixtures/api/${name}`, import.meta.url));
  return JSON.parse(readFileSync(path, "utf-8"));
}

export const itemGolden = load("item.golden.json") as ItemPayload;
export const item3of5Golden = load("item-3of5.golden.json") as ItemPayload;
export const contextGolden = load("context.golden.json") as {
  group_id: string;
  doc_id: string;
  excerpt: string;
  span: { start: number; end: number };
  highlights: { start: number; end: number }[];
};
export const validationGolden = load("validation.golden.json") as ValidationBody;

// the fixture document behind item.golden.json; the payload must shield the
// annotator from everything outside the snippets
export const FIXTURE_DOC_TEXT = "The man was found. A woman appeared.";
