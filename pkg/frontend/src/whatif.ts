/** Interactive what-if exploration against the /whatif endpoint.
 *
 * The panel owns the list of overrides; every edit re-queries the service so
 * each row's numbers come from a response (the only local arithmetic is the
 * displayed delta between two response probabilities).  Stale responses are
 * discarded by request token, so at most one in-flight refresh wins.
 */

import type { ServiceClient } from "./api.js";
import { CLASS_DISPLAY, formatShap } from "./explanation.js";
import type { Override, PredictRequest, WhatIfResult } from "./types.js";

export class WhatIfPanel {
  private overrides: Override[] = [];
  private results: WhatIfResult[] = [];
  private requestToken = 0;
  private baseRequest: PredictRequest | null = null;

  constructor(
    private readonly client: ServiceClient,
    private readonly container: HTMLElement,
  ) {}

  get currentOverrides(): readonly Override[] {
    return this.overrides;
  }

  async setBaseline(request: PredictRequest): Promise<void> {
    this.baseRequest = request;
    this.overrides = [];
    await this.refresh();
  }

  async addOverride(override: Override): Promise<void> {
    this.overrides.push(override);
    await this.refresh();
  }

  async removeOverride(index: number): Promise<void> {
    this.overrides.splice(index, 1);
    await this.refresh();
  }

  async refresh(): Promise<void> {
    if (!this.baseRequest) return;
    const token = ++this.requestToken;
    const response = await this.client.whatif(this.baseRequest, this.overrides);
    if (token !== this.requestToken) return; // a newer edit superseded this one
    this.results = response.results;
    this.render();
  }

  render(): void {
    const doc = this.container.ownerDocument;
    this.container.textContent = "";
    const table = doc.createElement("table");
    table.className = "whatif-table";
    const head = doc.createElement("tr");
    for (const title of ["Scenario", "P(TMJ involvement)", "Change", "Prediction set", ""]) {
      const th = doc.createElement("th");
      th.textContent = title;
      head.append(th);
    }
    table.append(head);

    const baseline = this.results[0]?.response;
    this.results.forEach((result, index) => {
      const row = doc.createElement("tr");
      row.className = index === 0 ? "whatif-row baseline" : "whatif-row override";
      row.dataset.index = String(index);

      const scenario = doc.createElement("td");
      scenario.className = "scenario";
      scenario.textContent =
        result.override === null
          ? "baseline"
          : Object.entries(result.override)
              .map(([k, v]) => `${k} = ${v}`)
              .join(", ");
      row.append(scenario);

      if (result.error) {
        const cell = doc.createElement("td");
        cell.colSpan = 3;
        const chip = doc.createElement("span");
        chip.className = "error-chip";
        chip.textContent = result.error.errors
          .map((e) => `${e.feature}: ${e.message}`)
          .join("; ");
        cell.append(chip);
        row.append(cell);
      } else if (result.response) {
        const p1 = result.response.probabilities.TMJ1;
        const prob = doc.createElement("td");
        prob.className = "p1";
        prob.dataset.sourceValue = String(p1);
        prob.textContent = `${(p1 * 100).toFixed(1)}%`;
        row.append(prob);

        const delta = doc.createElement("td");
        delta.className = "delta";
        if (index === 0 || !baseline) {
          delta.textContent = "-";
        } else {
          delta.dataset.baseline = String(baseline.probabilities.TMJ1);
          delta.dataset.sourceValue = String(p1);
          delta.textContent = formatShap(String(p1 - baseline.probabilities.TMJ1));
        }
        row.append(delta);

        const set = doc.createElement("td");
        set.className = "prediction-set";
        set.textContent = result.response.prediction_set
          .map((c) => CLASS_DISPLAY[c])
          .join(" | ");
        row.append(set);

        if (
          baseline &&
          index > 0 &&
          !sameMembers(result.response.prediction_set, baseline.prediction_set)
        ) {
          row.classList.add("set-changed");
        }
      }

      const actions = doc.createElement("td");
      if (index > 0) {
        const remove = doc.createElement("button");
        remove.className = "remove-override";
        remove.textContent = "remove";
        remove.addEventListener("click", () => void this.removeOverride(index - 1));
        actions.append(remove);
      }
      row.append(actions);
      table.append(row);
    });
    this.container.append(table);
  }
}

function sameMembers(a: string[], b: string[]): boolean {
  return a.length === b.length && [...a].sort().join(",") === [...b].sort().join(",");
}
