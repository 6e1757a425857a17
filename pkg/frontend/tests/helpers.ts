import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type {
  PredictRequest,
  PredictResponse,
  SchemaResponse,
  WhatIfResponse,
} from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));

function loadFixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(here, "fixtures", name), "utf-8")) as T;
}

export const fixtures = {
  schema: () => loadFixture<SchemaResponse>("schema.json"),
  confident: () => loadFixture<PredictResponse>("confident.json"),
  uncertain: () => loadFixture<PredictResponse>("uncertain.json"),
  whatif: () => loadFixture<WhatIfResponse>("whatif.json"),
  confidentRequest: () => loadFixture<PredictRequest>("confident_request.json"),
  uncertainRequest: () => loadFixture<PredictRequest>("uncertain_request.json"),
};

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
