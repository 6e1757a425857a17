/** Application wiring: schema fetch -> form -> prediction -> what-if panel.
 *
 * No patient data is persisted anywhere on the client.  At most one predict
 * request is in flight; responses that lose the race are dropped.
 */

import { ApiError, ServiceClient } from "./api.js";
import { renderExplanation } from "./explanation.js";
import {
  createFormState,
  isSubmittable,
  renderFetchFailureBanner,
  renderForm,
  serializeRequest,
  setFieldValue,
  type ExamFormState,
} from "./form.js";
import type { SchemaResponse } from "./types.js";
import { WhatIfPanel } from "./whatif.js";

export interface AppElements {
  form: HTMLElement;
  explanation: HTMLElement;
  whatif: HTMLElement;
  status: HTMLElement;
}

export class App {
  private schema: SchemaResponse | null = null;
  private state: ExamFormState | null = null;
  private requestToken = 0;
  readonly panel: WhatIfPanel;

  constructor(
    private readonly client: ServiceClient,
    private readonly elements: AppElements,
  ) {
    this.panel = new WhatIfPanel(client, elements.whatif);
  }

  async start(): Promise<void> {
    try {
      this.schema = await this.client.fetchSchema();
    } catch {
      renderFetchFailureBanner(this.elements.form, () => void this.start());
      return;
    }
    this.state = createFormState(this.schema);
    this.renderForm();
  }

  private renderForm(): void {
    if (!this.schema || !this.state) return;
    renderForm(this.elements.form, this.schema, this.state, (block, feature, value) => {
      setFieldValue(this.state!, this.schema!, block, feature, value);
      this.renderForm();
    });
    const submit = this.elements.form.querySelector<HTMLButtonElement>(".submit-btn");
    submit?.addEventListener("click", () => void this.submit());
    const gender = this.elements.form.querySelector<HTMLSelectElement>(".patient-gender");
    gender?.addEventListener("change", () => {
      this.state!.gender = gender.value;
      this.renderForm();
    });
    for (const input of this.elements.form.querySelectorAll<HTMLInputElement>(".patient-age")) {
      input.addEventListener("change", () => {
        this.state!.ages[Number(input.dataset.block)] = input.value;
        this.renderForm();
      });
    }
  }

  async submit(): Promise<void> {
    if (!this.schema || !this.state || !isSubmittable(this.state)) return;
    const request = serializeRequest(this.state, this.schema);
    const token = ++this.requestToken;
    this.elements.status.textContent = "assessing...";
    try {
      const response = await this.client.predict(request);
      if (token !== this.requestToken) return;
      this.elements.status.textContent = "";
      renderExplanation(this.elements.explanation, response);
      await this.panel.setBaseline(request);
    } catch (error) {
      if (token !== this.requestToken) return;
      if (error instanceof ApiError && error.fieldErrors.length > 0) {
        this.applyFieldErrors(error);
      } else {
        this.elements.status.textContent = "service unavailable; please retry";
      }
    }
  }

  private applyFieldErrors(error: ApiError): void {
    this.elements.status.textContent = "please correct the highlighted fields";
    for (const fieldError of error.fieldErrors) {
      const wrapper = this.elements.form.querySelector(
        `.exam-field[data-feature="${fieldError.feature}"]`,
      );
      if (wrapper) {
        const chip = wrapper.ownerDocument.createElement("span");
        chip.className = "field-error";
        chip.textContent = fieldError.message;
        wrapper.append(chip);
      }
    }
  }
}
