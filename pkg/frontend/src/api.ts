/** Thin HTTP client; the UI consumes the service exclusively through this. */

import type {
  FieldError,
  Override,
  PredictRequest,
  PredictResponse,
  SchemaResponse,
  WhatIfResponse,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly fieldErrors: FieldError[];

  constructor(status: number, message: string, fieldErrors: FieldError[] = []) {
    super(message);
    this.status = status;
    this.fieldErrors = fieldErrors;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let fieldErrors: FieldError[] = [];
  let message = `service error ${response.status}`;
  try {
    const body = await response.json();
    if (Array.isArray(body.errors)) {
      fieldErrors = body.errors;
      message = fieldErrors.map((e) => `${e.feature}: ${e.message}`).join("; ");
    } else if (typeof body.detail === "string") {
      message = body.detail;
    }
  } catch {
    // non-JSON body: keep the status message
  }
  return new ApiError(response.status, message, fieldErrors);
}

export class ServiceClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(this.url(path));
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(this.url(path), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  fetchSchema(): Promise<SchemaResponse> {
    return this.get<SchemaResponse>("/schema");
  }

  predict(request: PredictRequest): Promise<PredictResponse> {
    return this.post<PredictResponse>("/predict", request);
  }

  whatif(request: PredictRequest, overrides: Override[]): Promise<WhatIfResponse> {
    return this.post<WhatIfResponse>("/whatif", { ...request, overrides });
  }
}
