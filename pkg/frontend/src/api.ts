/**
 * ApiClient: every endpoint the studio touches, with response validation.
 * A response that fails validation raises SchemaError so the UI surfaces
 * it instead of rendering garbage.
 */

import {
  ApiError,
  GenerationOptions,
  GenerationTask,
  JOB_STATES,
  SCHEMA_VERSION,
  SchemaError,
  TemplateInfo,
  TASK_STATES,
  TrainingJob,
  UploadResult,
  UserProfile,
} from './types.js';

type FetchLike = typeof fetch;

function check(cond: boolean, what: string): void {
  if (!cond) throw new SchemaError(`bad server response: ${what}`);
}

function checkEnvelope(body: any): void {
  check(body && typeof body === 'object', 'not an object');
  check(body.v === SCHEMA_VERSION, `schema version ${body?.v}`);
}

function asTemplate(t: any): TemplateInfo {
  check(typeof t?.id === 'string', 'template.id');
  check(typeof t?.height === 'number' && typeof t?.width === 'number', 'template dims');
  check(typeof t?.faces === 'number' && t.faces >= 0, 'template.faces');
  return t as TemplateInfo;
}

function asProfile(u: any): UserProfile {
  check(typeof u?.user_id === 'string', 'user_id');
  check(typeof u?.image_count === 'number', 'image_count');
  check(typeof u?.trained === 'boolean', 'trained');
  return u as UserProfile;
}

function asJob(j: any): TrainingJob {
  check(typeof j?.job_id === 'string', 'job_id');
  check(JOB_STATES.includes(j?.state), `job state ${j?.state}`);
  check(typeof j?.progress === 'number' && j.progress >= 0 && j.progress <= 1,
    'job progress');
  return j as TrainingJob;
}

function asTask(t: any): GenerationTask {
  check(typeof t?.task_id === 'string', 'task_id');
  check(TASK_STATES.includes(t?.state), `task state ${t?.state}`);
  check(t.state !== 'done' || typeof t?.result === 'string', 'done task without result');
  return t as GenerationTask;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly token: string = '',
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    return this.token ? { ...extra, 'X-Api-Token': this.token } : extra;
  }

  private async request(path: string, init: RequestInit = {}): Promise<any> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      ...init,
      headers: this.headers((init.headers as Record<string, string>) ?? {}),
    });
    let body: any = null;
    const text = await resp.text();
    try {
      body = text ? JSON.parse(text) : null;
    } catch {
      throw new SchemaError(`non-JSON response from ${path}`);
    }
    if (!resp.ok) {
      const err = body?.error;
      check(typeof err?.code === 'string' && typeof err?.message === 'string',
        `error envelope on ${path}`);
      throw new ApiError(resp.status, err.code, err.message);
    }
    checkEnvelope(body);
    return body;
  }

  async health(): Promise<{ backend: string; kernels: string }> {
    const body = await this.request('/api/v1/health');
    check(body.status === 'ok', 'health status');
    return body;
  }

  async listTemplates(): Promise<TemplateInfo[]> {
    const body = await this.request('/api/v1/templates');
    check(Array.isArray(body.templates), 'templates array');
    return body.templates.map(asTemplate);
  }

  templateImageUrl(id: string): string {
    return `${this.baseUrl}/templates/${encodeURIComponent(id)}`;
  }

  async listUsers(): Promise<UserProfile[]> {
    const body = await this.request('/api/v1/users');
    check(Array.isArray(body.users), 'users array');
    return body.users.map(asProfile);
  }

  async getUser(userId: string): Promise<UserProfile> {
    return asProfile(await this.request(`/api/v1/users/${encodeURIComponent(userId)}`));
  }

  faceIdUrl(userId: string): string {
    return `${this.baseUrl}/api/v1/users/${encodeURIComponent(userId)}/face_id`;
  }

  async uploadImages(userId: string, files: File[] | Blob[]): Promise<UploadResult> {
    const form = new FormData();
    for (const [i, file] of files.entries()) {
      form.append('files', file, (file as File).name ?? `photo-${i}.png`);
    }
    const body = await this.request(
      `/api/v1/users/${encodeURIComponent(userId)}/images`,
      { method: 'POST', body: form });
    check(typeof body.stored === 'number' && typeof body.total === 'number', 'upload counts');
    return body;
  }

  async startTraining(userId: string, overrides: object = {}): Promise<string> {
    const body = await this.request(
      `/api/v1/users/${encodeURIComponent(userId)}/train`,
      {
        method: 'POST',
        body: JSON.stringify(overrides),
        headers: { 'Content-Type': 'application/json' },
      });
    check(typeof body.job_id === 'string', 'job_id');
    return body.job_id;
  }

  async getJob(jobId: string): Promise<TrainingJob> {
    return asJob(await this.request(`/api/v1/jobs/${encodeURIComponent(jobId)}`));
  }

  async createGeneration(
    templateId: string, userIds: string[], options: GenerationOptions,
  ): Promise<string> {
    const body = await this.request('/api/v1/generate', {
      method: 'POST',
      body: JSON.stringify({ template_id: templateId, user_ids: userIds, options }),
      headers: { 'Content-Type': 'application/json' },
    });
    check(typeof body.task_id === 'string', 'task_id');
    return body.task_id;
  }

  async getTask(taskId: string): Promise<GenerationTask> {
    return asTask(await this.request(`/api/v1/tasks/${encodeURIComponent(taskId)}`));
  }

  resultImageUrl(taskId: string): string {
    return `${this.baseUrl}/api/v1/results/${encodeURIComponent(taskId)}/image`;
  }

  async fetchResultBlob(taskId: string): Promise<Blob> {
    const resp = await this.fetchFn(this.resultImageUrl(taskId),
      { headers: this.headers() });
    if (!resp.ok) throw new ApiError(resp.status, 'no_result', 'result not available');
    return resp.blob();
  }
}
