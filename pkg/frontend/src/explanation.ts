/** Prediction display: probability gauge, conformal-set badge, attribution bars.
 *
 * Every number shown on screen is taken verbatim from a service response
 * field; elements carry the exact value in data-source-value and the visible
 * text is a pure formatting of that attribute, so nothing here ever computes
 * model math.
 */

import type { AttributionEntry, PredictResponse } from "./types.js";

export const CLASS_DISPLAY: Record<string, string> = {
  TMJ0: "No TMJ involvement",
  TMJ1: "TMJ involvement",
};

export interface ExplanationView {
  probability: number; // TMJ1 probability, straight from the response
  pointLabel: string;
  badge: "confident" | "uncertain";
  predictionSet: string[];
  bars: AttributionEntry[]; // sorted by |shap_value| descending
  baseValue: number;
  alpha: number;
}

export function buildExplanationView(response: PredictResponse): ExplanationView {
  const bars = [...response.attributions].sort(
    (a, b) => Math.abs(b.shap_value) - Math.abs(a.shap_value),
  );
  return {
    probability: response.probabilities.TMJ1,
    pointLabel: response.point_label,
    badge: response.set_size === 1 ? "confident" : "uncertain",
    predictionSet: response.prediction_set,
    bars,
    baseValue: response.base_value,
    alpha: response.alpha,
  };
}

export function formatProbability(value: string): string {
  return `${(Number(value) * 100).toFixed(1)}%`;
}

export function formatShap(value: string): string {
  const n = Number(value);
  return `${n >= 0 ? "+" : ""}${n.toFixed(4)}`;
}

function numberSpan(doc: Document, className: string, sourceValue: number,
                    format: (v: string) => string): HTMLElement {
  const span = doc.createElement("span");
  span.className = className;
  span.dataset.sourceValue = String(sourceValue);
  span.textContent = format(span.dataset.sourceValue);
  return span;
}

export function renderExplanation(container: HTMLElement, response: PredictResponse): void {
  const doc = container.ownerDocument;
  const view = buildExplanationView(response);
  container.textContent = "";

  const gauge = doc.createElement("div");
  gauge.className = "probability-gauge";
  gauge.append(numberSpan(doc, "gauge-value", view.probability, formatProbability));
  const gaugeLabel = doc.createElement("span");
  gaugeLabel.className = "gauge-label";
  gaugeLabel.textContent = `probability of ${CLASS_DISPLAY.TMJ1}`;
  gauge.append(gaugeLabel);
  container.append(gauge);

  const badge = doc.createElement("div");
  badge.className = `set-badge ${view.badge}`;
  badge.textContent =
    view.badge === "confident"
      ? `Confident: ${CLASS_DISPLAY[view.predictionSet[0]]}`
      : `Uncertain: prediction set covers ${view.predictionSet
          .map((c) => CLASS_DISPLAY[c])
          .join(" and ")}`;
  const alphaNote = doc.createElement("small");
  alphaNote.className = "alpha-note";
  alphaNote.dataset.sourceValue = String(view.alpha);
  alphaNote.textContent = ` (target coverage ${((1 - view.alpha) * 100).toFixed(0)}%)`;
  badge.append(alphaNote);
  container.append(badge);

  const list = doc.createElement("ol");
  list.className = "attribution-bars";
  const maxAbs = Math.max(...view.bars.map((b) => Math.abs(b.shap_value)), 1e-12);
  for (const bar of view.bars) {
    const item = doc.createElement("li");
    item.className = "attribution-bar";
    item.dataset.feature = bar.feature;

    const name = doc.createElement("span");
    name.className = "bar-feature";
    name.textContent = bar.feature;

    const rawValue = doc.createElement("span");
    rawValue.className = "bar-raw-value";
    rawValue.textContent = bar.raw_value === null ? "missing" : String(bar.raw_value);

    const fill = doc.createElement("span");
    fill.className = `bar-fill ${bar.shap_value >= 0 ? "positive" : "negative"}`;
    fill.style.width = `${(Math.abs(bar.shap_value) / maxAbs) * 100}%`;

    item.append(name, rawValue, fill,
                numberSpan(doc, "bar-shap", bar.shap_value, formatShap));
    list.append(item);
  }
  container.append(list);

  const base = doc.createElement("div");
  base.className = "base-value-marker";
  base.append(numberSpan(doc, "base-value", view.baseValue, formatProbability));
  const baseLabel = doc.createElement("span");
  baseLabel.textContent = " cohort baseline";
  base.append(baseLabel);
  container.append(base);
}
