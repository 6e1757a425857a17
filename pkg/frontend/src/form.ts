/** Schema-driven examination entry form.
 *
 * One control per raw feature, typed by its kind (toggle / select / number);
 * lagged models add one tab per required previous examination.  Field values
 * live in ExamFormState as raw strings with per-field validation state, and
 * serializeRequest turns a valid state into exactly the request body the
 * service accepts.
 */

import type {
  ExamValues,
  FeatureDescriptor,
  Override,
  PredictRequest,
  SchemaResponse,
} from "./types.js";

export interface FieldState {
  value: string;
  dirty: boolean;
  error: string | null;
}

export interface ExamFormState {
  /** keyed `${block}:${feature}`; block 0 is the current exam */
  fields: Map<string, FieldState>;
  gender: string;
  /** age per block: index 0 current, 1..k previous exams */
  ages: string[];
  overrides: Override[];
}

export function fieldKey(block: number, feature: string): string {
  return `${block}:${feature}`;
}

export function createFormState(schema: SchemaResponse): ExamFormState {
  const fields = new Map<string, FieldState>();
  for (let block = 0; block <= schema.previous_exams_required; block++) {
    for (const feature of schema.raw_features) {
      fields.set(fieldKey(block, feature.name), { value: "", dirty: false, error: null });
    }
  }
  return {
    fields,
    gender: "",
    ages: new Array(schema.previous_exams_required + 1).fill(""),
    overrides: [],
  };
}

export function validateValue(descriptor: FeatureDescriptor, raw: string): string | null {
  if (raw === "") return null; // missing values are allowed
  switch (descriptor.kind) {
    case "binary":
      return raw === "0" || raw === "1" ? null : "must be 0 or 1";
    case "ordinal": {
      const levels = descriptor.levels ?? 2;
      const n = Number(raw);
      if (!Number.isInteger(n) || n < 0 || n >= levels) {
        return `must be a grade between 0 and ${levels - 1}`;
      }
      return null;
    }
    case "nominal":
      return (descriptor.categories ?? []).includes(raw) ? null : "unknown category";
    case "continuous":
      return Number.isFinite(Number(raw)) ? null : "must be a number";
  }
}

export function setFieldValue(
  state: ExamFormState,
  schema: SchemaResponse,
  block: number,
  feature: string,
  raw: string,
): void {
  const descriptor = schema.raw_features.find((f) => f.name === feature);
  if (!descriptor) throw new Error(`unknown feature ${feature}`);
  state.fields.set(fieldKey(block, feature), {
    value: raw,
    dirty: true,
    error: validateValue(descriptor, raw),
  });
}

export function isSubmittable(state: ExamFormState): boolean {
  if (state.gender !== "female" && state.gender !== "male") return false;
  for (const age of state.ages) {
    if (age === "" || !Number.isFinite(Number(age))) return false;
  }
  for (const field of state.fields.values()) {
    if (field.error !== null) return false;
  }
  return true;
}

function parseValue(descriptor: FeatureDescriptor, raw: string): number | string {
  if (descriptor.kind === "nominal") return raw;
  return Number(raw);
}

export function serializeRequest(
  state: ExamFormState,
  schema: SchemaResponse,
): PredictRequest {
  const blockValues = (block: number): ExamValues => {
    const values: ExamValues = {};
    for (const descriptor of schema.raw_features) {
      const field = state.fields.get(fieldKey(block, descriptor.name));
      if (field && field.value !== "") {
        values[descriptor.name] = parseValue(descriptor, field.value);
      }
    }
    return values;
  };
  const request: PredictRequest = {
    values: blockValues(0),
    gender: state.gender,
    age_years: Number(state.ages[0]),
  };
  if (schema.previous_exams_required > 0) {
    request.previous_exams = [];
    for (let block = 1; block <= schema.previous_exams_required; block++) {
      request.previous_exams.push({
        values: blockValues(block),
        age_years: Number(state.ages[block]),
      });
    }
  }
  return request;
}

/** Populate a form state from an existing request (edit / replay flows). */
export function stateFromRequest(
  schema: SchemaResponse,
  request: PredictRequest,
): ExamFormState {
  const state = createFormState(schema);
  state.gender = request.gender;
  state.ages[0] = String(request.age_years);
  const apply = (block: number, values: ExamValues) => {
    for (const [name, value] of Object.entries(values)) {
      setFieldValue(state, schema, block, name, String(value));
    }
  };
  apply(0, request.values);
  (request.previous_exams ?? []).forEach((exam, i) => {
    state.ages[i + 1] = String(exam.age_years);
    apply(i + 1, exam.values);
  });
  return state;
}

// --- rendering ---------------------------------------------------------------

function option(doc: Document, value: string, label?: string): HTMLOptionElement {
  const el = doc.createElement("option");
  el.value = value;
  el.textContent = label ?? value;
  return el;
}

function controlFor(descriptor: FeatureDescriptor, doc: Document): HTMLElement {
  switch (descriptor.kind) {
    case "binary": {
      const input = doc.createElement("input");
      input.type = "checkbox";
      input.className = "control-toggle";
      return input;
    }
    case "ordinal": {
      const select = doc.createElement("select");
      select.className = "control-select";
      select.append(option(doc, ""));
      for (let level = 0; level < (descriptor.levels ?? 2); level++) {
        select.append(option(doc, String(level)));
      }
      return select;
    }
    case "nominal": {
      const select = doc.createElement("select");
      select.className = "control-select";
      select.append(option(doc, ""));
      for (const category of descriptor.categories ?? []) {
        select.append(option(doc, category));
      }
      return select;
    }
    case "continuous": {
      const input = doc.createElement("input");
      input.type = "number";
      input.className = "control-number";
      input.step = "0.1";
      if (descriptor.unit) input.placeholder = descriptor.unit;
      return input;
    }
  }
}

export type FieldChangeHandler = (block: number, feature: string, value: string) => void;

function blockTitle(block: number): string {
  return block === 0 ? "Current examination" : `Previous examination ${block}`;
}

export function renderForm(
  container: HTMLElement,
  schema: SchemaResponse,
  state: ExamFormState,
  onChange: FieldChangeHandler,
): void {
  const doc = container.ownerDocument;
  container.textContent = "";

  const patient = doc.createElement("fieldset");
  patient.className = "patient-panel";
  const genderSelect = doc.createElement("select");
  genderSelect.className = "patient-gender";
  genderSelect.append(option(doc, ""), option(doc, "female"), option(doc, "male"));
  genderSelect.value = state.gender;
  patient.append(labelled(doc, "Gender", genderSelect));
  state.ages.forEach((age, block) => {
    const input = doc.createElement("input");
    input.type = "number";
    input.className = "patient-age";
    input.dataset.block = String(block);
    input.value = age;
    patient.append(labelled(doc, block === 0 ? "Age (years)" : `Age at previous exam ${block}`, input));
  });
  container.append(patient);

  for (let block = 0; block <= schema.previous_exams_required; block++) {
    const tab = doc.createElement("section");
    tab.className = "exam-tab";
    tab.dataset.block = String(block);
    const heading = doc.createElement("h2");
    heading.textContent = blockTitle(block);
    tab.append(heading);
    for (const descriptor of schema.raw_features) {
      const field = state.fields.get(fieldKey(block, descriptor.name))!;
      const wrapper = doc.createElement("div");
      wrapper.className = "exam-field";
      wrapper.dataset.feature = descriptor.name;
      wrapper.dataset.block = String(block);
      const control = controlFor(descriptor, doc);
      control.dataset.feature = descriptor.name;
      control.dataset.block = String(block);
      if (control instanceof doc.defaultView!.HTMLInputElement && control.type === "checkbox") {
        control.checked = field.value === "1";
        control.addEventListener("change", () =>
          onChange(block, descriptor.name, control.checked ? "1" : "0"),
        );
      } else {
        (control as HTMLInputElement | HTMLSelectElement).value = field.value;
        control.addEventListener("change", () =>
          onChange(block, descriptor.name, (control as HTMLInputElement).value),
        );
      }
      wrapper.append(labelled(doc, descriptor.name, control));
      if (field.error) {
        const err = doc.createElement("span");
        err.className = "field-error";
        err.textContent = field.error;
        wrapper.append(err);
      }
      tab.append(wrapper);
    }
    container.append(tab);
  }

  const submit = doc.createElement("button");
  submit.className = "submit-btn";
  submit.textContent = "Assess TMJ involvement";
  submit.disabled = !isSubmittable(state);
  container.append(submit);
}

function labelled(doc: Document, text: string, control: HTMLElement): HTMLElement {
  const label = doc.createElement("label");
  const span = doc.createElement("span");
  span.textContent = text;
  label.append(span, control);
  return label;
}

export function renderFetchFailureBanner(container: HTMLElement, onRetry: () => void): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  const banner = doc.createElement("div");
  banner.className = "schema-banner";
  banner.textContent = "Could not reach the decision-support service.";
  const retry = doc.createElement("button");
  retry.className = "retry-btn";
  retry.textContent = "Retry";
  retry.addEventListener("click", onRetry);
  banner.append(retry);
  container.append(banner);
}
