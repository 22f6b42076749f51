/**
 * Training view: drag-drop photo upload with live 5-20 gating, a Start
 * Training action, and a job progress panel polling at 1 s intervals.
 */

import { ApiClient } from '../api.js';
import { h, replaceChildren, toast } from '../dom.js';
import { pollUntilTerminal, PollHandle } from '../poll.js';
import { uploadGate } from '../store.js';
import { ApiError, TrainingJob } from '../types.js';

export class TrainView {
  readonly root: HTMLElement;
  private userId = '';
  private pending: File[] = [];
  private uploadedCount = 0;
  private poller: PollHandle<TrainingJob> | null = null;

  private readonly userInput: HTMLInputElement;
  private readonly fileInput: HTMLInputElement;
  private readonly dropZone: HTMLElement;
  private readonly hintEl: HTMLElement;
  private readonly startBtn: HTMLButtonElement;
  private readonly progressPanel: HTMLElement;
  private readonly badgeEl: HTMLElement;
  private readonly toasts: HTMLElement;

  constructor(private readonly api: ApiClient,
              private readonly onTrained: () => void = () => {}) {
    this.userInput = h('input', {
      placeholder: 'user id', value: '',
      onInput: () => { this.userId = this.userInput.value.trim(); void this.refreshCount(); },
    });
    this.fileInput = h('input', {
      type: 'file', multiple: true, accept: 'image/png,image/jpeg',
      onChange: () => this.addFiles(Array.from(this.fileInput.files ?? [])),
    });
    this.dropZone = h('div', {
      class: 'dropzone',
      onDragover: (e: DragEvent) => { e.preventDefault(); },
      onDrop: (e: DragEvent) => {
        e.preventDefault();
        this.addFiles(Array.from(e.dataTransfer?.files ?? []));
      },
    }, 'drop 5-20 photos here or ', this.fileInput);
    this.hintEl = h('p', { class: 'hint' });
    this.startBtn = h('button', {
      class: 'primary', disabled: true,
      onClick: () => void this.startTraining(),
    }, 'Start Training');
    this.progressPanel = h('div', { class: 'progress-panel' });
    this.badgeEl = h('span', { class: 'badge' }, 'untrained');
    this.toasts = h('div', { class: 'toasts' });

    this.root = h('section', { class: 'train-view' },
      h('h2', {}, 'Train a user model'),
      h('div', { class: 'row' }, this.userInput, this.badgeEl),
      this.dropZone,
      this.hintEl,
      this.startBtn,
      this.progressPanel,
      this.toasts,
    );
    this.renderGate();
  }

  private addFiles(files: File[]): void {
    this.pending.push(...files);
    void this.uploadPending();
  }

  private async uploadPending(): Promise<void> {
    if (!this.userId) {
      toast(this.toasts, 'no_user', 'enter a user id before uploading');
      this.pending = [];
      return;
    }
    const batch = this.pending.splice(0);
    if (batch.length === 0) return;
    try {
      const res = await this.api.uploadImages(this.userId, batch);
      this.uploadedCount = res.total;
    } catch (err) {
      this.surface(err);
    }
    this.renderGate();
  }

  private async refreshCount(): Promise<void> {
    if (!this.userId) return;
    try {
      const profile = await this.api.getUser(this.userId);
      this.uploadedCount = profile.image_count;
      this.setBadge(profile.trained);
    } catch {
      this.uploadedCount = 0;  // unknown user: nothing uploaded yet
      this.setBadge(false);
    }
    this.renderGate();
  }

  private renderGate(): void {
    const gate = uploadGate(this.uploadedCount);
    this.hintEl.textContent = gate.hint;
    this.startBtn.disabled = !gate.canStart;
  }

  private setBadge(trained: boolean): void {
    this.badgeEl.textContent = trained ? 'trained' : 'untrained';
    this.badgeEl.className = trained ? 'badge trained' : 'badge';
    if (trained) {
      replaceChildren(this.badgeEl, 'trained ',
        h('img', { class: 'face-id-thumb', src: this.api.faceIdUrl(this.userId) }));
    }
  }

  private async startTraining(): Promise<void> {
    this.startBtn.disabled = true;
    try {
      const jobId = await this.api.startTraining(this.userId);
      this.watchJob(jobId);
    } catch (err) {
      this.surface(err);
      this.renderGate();
    }
  }

  private watchJob(jobId: string): void {
    this.poller?.stop();
    this.poller = pollUntilTerminal(
      () => this.api.getJob(jobId),
      (job) => this.renderJob(job),
      1000,
    );
    this.poller.done
      .then((job) => {
        if (job.state === 'done') {
          this.setBadge(true);
          this.onTrained();
        } else {
          toast(this.toasts, 'training_failed', job.message || 'training failed');
        }
        this.renderGate();
      })
      .catch((err) => this.surface(err));
  }

  private renderJob(job: TrainingJob): void {
    const pct = Math.round(job.progress * 100);
    replaceChildren(this.progressPanel,
      h('div', { class: 'stage-label', dataset: { state: job.state } },
        `stage: ${job.state}`),
      h('div', { class: 'bar' },
        h('div', { class: 'bar-fill', style: `width:${pct}%` })),
      h('div', { class: 'pct' }, `${pct}%${job.message ? ` - ${job.message}` : ''}`),
    );
  }

  private surface(err: unknown): void {
    if (err instanceof ApiError) toast(this.toasts, err.code, err.message);
    else toast(this.toasts, 'error', String(err));
  }
}
