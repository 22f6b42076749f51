/** Typed bindings for the portraitforge REST API, schema version 1. */

export const SCHEMA_VERSION = 1;

export type JobState =
  | 'queued' | 'preprocessing' | 'training' | 'validating' | 'merging'
  | 'done' | 'failed';

export type TaskState =
  | 'queued' | 'preparing' | 'stage1' | 'stage2' | 'merging' | 'postprocess'
  | 'done' | 'failed';

export const JOB_STATES: JobState[] = [
  'queued', 'preprocessing', 'training', 'validating', 'merging', 'done', 'failed',
];
export const TASK_STATES: TaskState[] = [
  'queued', 'preparing', 'stage1', 'stage2', 'merging', 'postprocess', 'done', 'failed',
];

export const TERMINAL_STATES = ['done', 'failed'] as const;

export interface TemplateInfo {
  id: string;
  height: number;
  width: number;
  faces: number;
}

export interface UserProfile {
  user_id: string;
  image_count: number;
  trained: boolean;
  best_score: number | null;
  warning?: string;
}

export interface TrainingJob {
  job_id: string;
  user_id: string;
  state: JobState;
  progress: number;
  message: string;
}

export interface GenerationTask {
  task_id: string;
  template_id: string;
  user_ids: string[];
  state: TaskState;
  message: string;
  result: string | null;
}

export interface GenerationOptions {
  seed: number;
  style?: string;
  mouth_refine?: boolean;
}

export interface UploadResult {
  stored: number;
  total: number;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}

/** Server-side failure carrying the structured error envelope. */
export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

/** A response that does not match the v1 schema; never silently ignored. */
export class SchemaError extends Error {}
