import { afterEach, describe, expect, test, vi } from "vitest";

import { ServiceClient } from "../src/api.js";
import { WhatIfPanel } from "../src/whatif.js";
import type { WhatIfResponse } from "../src/types.js";
import { fixtures, jsonResponse } from "./helpers.js";

const whatifFixture = fixtures.whatif();
const baseRequest = fixtures.uncertainRequest();

afterEach(() => {
  vi.restoreAllMocks();
});

/** Mocked service: answers /whatif from the recorded fixture, sliced to the
 * requested override count so add/remove behaves like the live service. */
function mockWhatIfService(): void {
  vi.stubGlobal(
    "fetch",
    vi.fn(async (_url: string, init?: RequestInit) => {
      const body = JSON.parse(String(init?.body ?? "{}"));
      const count = (body.overrides ?? []).length;
      const sliced: WhatIfResponse = {
        results: whatifFixture.results.slice(0, count + 1),
      };
      return jsonResponse(sliced);
    }),
  );
}

function mount(): HTMLElement {
  const container = document.createElement("div");
  document.body.append(container);
  return container;
}

const OVERRIDES = [
  { krepitationleft: 0, krepitationright: 0, painmoveleft: 0 },
  { profile: "wavy" },
  { openingmm: 48.0, opening: 0 },
];

describe("what-if panel rows", () => {
  test("zero overrides shows the baseline row only", async () => {
    mockWhatIfService();
    const panel = new WhatIfPanel(new ServiceClient("http://svc"), mount());
    await panel.setBaseline(baseRequest);
    const rows = document.querySelectorAll(".whatif-row");
    expect(rows).toHaveLength(1);
    expect(rows[0].classList.contains("baseline")).toBe(true);
  });

  test("adding overrides adds rows in order; removing one removes its row", async () => {
    mockWhatIfService();
    const container = mount();
    const panel = new WhatIfPanel(new ServiceClient("http://svc"), container);
    await panel.setBaseline(baseRequest);
    for (const override of OVERRIDES) {
      await panel.addOverride(override);
    }
    let rows = container.querySelectorAll(".whatif-row");
    expect(rows).toHaveLength(4);
    const scenarios = [...rows].map((r) => r.querySelector(".scenario")!.textContent);
    expect(scenarios[0]).toBe("baseline");
    expect(scenarios[1]).toContain("krepitationleft = 0");
    expect(scenarios[2]).toContain("profile = wavy");
    expect(scenarios[3]).toContain("openingmm = 48");

    await panel.removeOverride(2); // drop the openingmm scenario
    rows = container.querySelectorAll(".whatif-row");
    expect(rows).toHaveLength(3);
    expect([...rows].every((r) => !r.textContent!.includes("openingmm = 48"))).toBe(true);
  });

  test("an invalid override renders an error chip without failing the batch", async () => {
    mockWhatIfService();
    const container = mount();
    const panel = new WhatIfPanel(new ServiceClient("http://svc"), container);
    await panel.setBaseline(baseRequest);
    await panel.addOverride(OVERRIDES[0]);
    await panel.addOverride(OVERRIDES[1]);
    const rows = container.querySelectorAll(".whatif-row");
    expect(rows).toHaveLength(3);
    expect(rows[2].querySelector(".error-chip")!.textContent).toContain("profile");
    expect(rows[1].querySelector(".error-chip")).toBeNull();
    expect(rows[1].querySelector(".p1")).not.toBeNull();
  });

  test("row probabilities equal the recorded response fields", async () => {
    mockWhatIfService();
    const container = mount();
    const panel = new WhatIfPanel(new ServiceClient("http://svc"), container);
    await panel.setBaseline(baseRequest);
    for (const override of OVERRIDES) {
      await panel.addOverride(override);
    }
    const cells = container.querySelectorAll(".whatif-row .p1");
    const expected = whatifFixture.results
      .filter((r) => r.response)
      .map((r) => String(r.response!.probabilities.TMJ1));
    expect([...cells].map((c) => c.getAttribute("data-source-value"))).toEqual(expected);
    // the delta column's inputs are the same two response fields
    const delta = container.querySelector(".whatif-row.override .delta")!;
    expect(delta.getAttribute("data-baseline")).toBe(
      String(whatifFixture.results[0].response!.probabilities.TMJ1),
    );
  });

  test("a set-membership change highlights the row", async () => {
    const uncertain = fixtures.uncertain(); // set {TMJ1, TMJ0}
    const confident = fixtures.confident(); // set {TMJ1}
    vi.stubGlobal(
      "fetch",
      vi.fn(async () =>
        jsonResponse({
          results: [
            { override: null, response: uncertain },
            { override: { krepitationleft: 1 }, response: confident },
          ],
        }),
      ),
    );
    const container = mount();
    const panel = new WhatIfPanel(new ServiceClient("http://svc"), container);
    await panel.setBaseline(baseRequest);
    await panel.addOverride({ krepitationleft: 1 });
    const overrideRow = container.querySelector(".whatif-row.override")!;
    expect(overrideRow.classList.contains("set-changed")).toBe(true);
  });

  test("stale responses are discarded by request token", async () => {
    let resolveFirst: (value: Response) => void = () => {};
    const first = new Promise<Response>((resolve) => (resolveFirst = resolve));
    const calls: string[] = [];
    vi.stubGlobal(
      "fetch",
      vi.fn(async (_url: string, init?: RequestInit) => {
        const body = JSON.parse(String(init?.body ?? "{}"));
        calls.push(JSON.stringify(body.overrides ?? []));
        if (calls.length === 1) return first; // slow first request
        return jsonResponse({ results: whatifFixture.results.slice(0, 2) });
      }),
    );
    const container = mount();
    const panel = new WhatIfPanel(new ServiceClient("http://svc"), container);
    const race = panel.setBaseline(baseRequest); // in flight, slow
    await panel.addOverride(OVERRIDES[0]); // supersedes it
    resolveFirst(jsonResponse({ results: whatifFixture.results.slice(0, 1) }));
    await race;
    // the stale single-row baseline response must not clobber the newer view
    expect(container.querySelectorAll(".whatif-row")).toHaveLength(2);
  });
});
