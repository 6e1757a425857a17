/** Wire types for the decision-support service API. */

export type FeatureKind = "binary" | "ordinal" | "nominal" | "continuous";

export interface FeatureDescriptor {
  name: string;
  kind: FeatureKind;
  side: "left" | "right" | "none";
  expert: boolean;
  mirror_of: string | null;
  levels?: number;
  categories?: string[];
  unit?: string;
}

export interface SchemaResponse {
  raw_features: FeatureDescriptor[];
  merged_layout: string[];
  previous_exams_required: number;
  class_names: Record<string, string>;
  schema_hash: string;
}

export interface ModelInfo {
  strategy: string;
  feature_subset: string;
  d: number;
  d_raw: number;
  alpha: number;
  lambda_reg: number;
  k_reg: number;
  schema_hash: string;
  train_report_digest: string;
  previous_exams_required: number;
  version: string;
}

export interface AttributionEntry {
  feature: string;
  shap_value: number;
  raw_value: number | string | null;
}

export interface PredictResponse {
  probabilities: { TMJ0: number; TMJ1: number };
  point_label: "TMJ0" | "TMJ1";
  prediction_set: string[];
  set_size: number;
  alpha: number;
  attributions: AttributionEntry[];
  base_value: number;
  model_info: ModelInfo;
}

export type ExamValues = Record<string, number | string>;

export interface PreviousExam {
  values: ExamValues;
  age_years: number;
}

export interface PredictRequest {
  values: ExamValues;
  gender: string;
  age_years: number;
  previous_exams?: PreviousExam[];
}

export interface FieldError {
  feature: string;
  message: string;
}

export type Override = ExamValues;

export interface WhatIfResult {
  override: Override | null;
  response?: PredictResponse;
  error?: { errors: FieldError[] };
}

export interface WhatIfResponse {
  results: WhatIfResult[];
}
