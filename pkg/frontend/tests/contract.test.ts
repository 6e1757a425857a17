import { afterEach, describe, expect, test, vi } from "vitest";

import { ApiError, ServiceClient } from "../src/api.js";
import { App } from "../src/app.js";
import { fixtures, jsonResponse } from "./helpers.js";

afterEach(() => {
  vi.restoreAllMocks();
  document.body.innerHTML = "";
});

function appElements() {
  const make = (id: string) => {
    const el = document.createElement("div");
    el.id = id;
    document.body.append(el);
    return el;
  };
  return {
    form: make("exam-form"),
    explanation: make("explanation"),
    whatif: make("whatif"),
    status: make("status"),
  };
}

describe("service client", () => {
  test("requests hit the configured base URL with JSON bodies", async () => {
    const seen: Array<{ url: string; body: unknown }> = [];
    vi.stubGlobal(
      "fetch",
      vi.fn(async (url: string, init?: RequestInit) => {
        seen.push({ url, body: init?.body ? JSON.parse(String(init.body)) : null });
        if (String(url).endsWith("/schema")) return jsonResponse(fixtures.schema());
        return jsonResponse(fixtures.uncertain());
      }),
    );
    const client = new ServiceClient("http://svc:8000/");
    await client.fetchSchema();
    const request = fixtures.uncertainRequest();
    await client.predict(request);
    await client.whatif(request, [{ deepbite: 1 }]);
    expect(seen.map((s) => s.url)).toEqual([
      "http://svc:8000/schema",
      "http://svc:8000/predict",
      "http://svc:8000/whatif",
    ]);
    expect(seen[1].body).toEqual(request);
    expect(seen[2].body).toEqual({ ...request, overrides: [{ deepbite: 1 }] });
  });

  test("field-level 400s surface as ApiError with the feature names", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () =>
        jsonResponse({ errors: [{ feature: "profile", message: "unknown category" }] }, 400),
      ),
    );
    const client = new ServiceClient("http://svc");
    const error = await client
      .predict(fixtures.uncertainRequest())
      .then(() => null, (e) => e as ApiError);
    expect(error).toBeInstanceOf(ApiError);
    expect(error!.status).toBe(400);
    expect(error!.fieldErrors[0].feature).toBe("profile");
  });
});

describe("app wiring against the mocked service", () => {
  test("start renders the schema-driven form; submit renders the explanation", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async (url: string) => {
        const path = String(url);
        if (path.endsWith("/schema")) return jsonResponse(fixtures.schema());
        if (path.endsWith("/predict")) return jsonResponse(fixtures.uncertain());
        return jsonResponse(fixtures.whatif());
      }),
    );
    const elements = appElements();
    const app = new App(new ServiceClient("http://svc"), elements);
    await app.start();
    expect(elements.form.querySelectorAll(".exam-field")).toHaveLength(26);

    // fill the minimal valid state through the app's own state object
    const anyApp = app as unknown as { state: { gender: string; ages: string[] } };
    anyApp.state.gender = "male";
    anyApp.state.ages[0] = "11";
    await app.submit();
    expect(elements.explanation.querySelector(".set-badge.uncertain")).not.toBeNull();
    expect(elements.whatif.querySelectorAll(".whatif-row").length).toBeGreaterThan(0);
  });

  test("schema fetch failure shows the retry banner", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => {
      throw new Error("connection refused");
    }));
    const elements = appElements();
    const app = new App(new ServiceClient("http://svc"), elements);
    await app.start();
    expect(elements.form.querySelector(".schema-banner")).not.toBeNull();
  });

  test("UI computes no model math: rendered numbers exist verbatim in the fixture", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async (url: string) => {
        const path = String(url);
        if (path.endsWith("/schema")) return jsonResponse(fixtures.schema());
        if (path.endsWith("/predict")) return jsonResponse(fixtures.confident());
        return jsonResponse({ results: [{ override: null, response: fixtures.confident() }] });
      }),
    );
    const elements = appElements();
    const app = new App(new ServiceClient("http://svc"), elements);
    await app.start();
    const anyApp = app as unknown as { state: { gender: string; ages: string[] } };
    anyApp.state.gender = "female";
    anyApp.state.ages[0] = "9";
    await app.submit();

    const fixture = fixtures.confident();
    const allowed = new Set<string>([
      String(fixture.probabilities.TMJ1),
      String(fixture.base_value),
      String(fixture.alpha),
      ...fixture.attributions.map((a) => String(a.shap_value)),
    ]);
    const sourced = document.querySelectorAll("[data-source-value]");
    expect(sourced.length).toBeGreaterThan(2);
    for (const el of sourced) {
      expect(allowed.has(el.getAttribute("data-source-value")!)).toBe(true);
    }
  });
});
