/**
 * Studio view: pick a template and an ordered set of trained users, set
 * the seed, generate, watch the task, inspect the result and provenance,
 * and re-roll from history at seed+1.
 */

import { ApiClient } from '../api.js';
import { h, replaceChildren, toast } from '../dom.js';
import { pollUntilTerminal, PollHandle } from '../poll.js';
import {
  StudioState,
  generateBlockReason,
  initialStudioState,
  moveUser,
  randomSeed,
  recordResult,
  rerollFrom,
  selectedTemplate,
  toggleUser,
} from '../store.js';
import { ApiError, GenerationTask } from '../types.js';

export class StudioView {
  readonly root: HTMLElement;
  state: StudioState = initialStudioState();
  private poller: PollHandle<GenerationTask> | null = null;

  private readonly gallery: HTMLElement;
  private readonly userList: HTMLElement;
  private readonly seedInput: HTMLInputElement;
  private readonly styleSelect: HTMLSelectElement;
  private readonly generateBtn: HTMLButtonElement;
  private readonly blockNote: HTMLElement;
  private readonly taskPanel: HTMLElement;
  private readonly resultPanel: HTMLElement;
  private readonly historyStrip: HTMLElement;
  private readonly toasts: HTMLElement;

  constructor(private readonly api: ApiClient) {
    this.gallery = h('div', { class: 'gallery' });
    this.userList = h('div', { class: 'user-list' });
    this.seedInput = h('input', {
      type: 'number', value: '0', min: '0',
      onInput: () => {
        this.state.seed = Number(this.seedInput.value) || 0;
      },
    });
    this.styleSelect = h('select', {
      onChange: () => { this.state.style = this.styleSelect.value; },
    }, h('option', { value: 'realistic' }, 'realistic'),
       h('option', { value: 'comic' }, 'comic'));
    this.generateBtn = h('button', {
      class: 'primary', onClick: () => void this.generate(),
    }, 'Generate');
    this.blockNote = h('span', { class: 'block-reason', role: 'note' });
    this.taskPanel = h('div', { class: 'task-panel' });
    this.resultPanel = h('div', { class: 'result-panel' });
    this.historyStrip = h('div', { class: 'history' });
    this.toasts = h('div', { class: 'toasts' });

    this.root = h('section', { class: 'studio-view' },
      h('h2', {}, 'Studio'),
      h('h3', {}, 'Templates'),
      this.gallery,
      h('h3', {}, 'Users (top to bottom = left to right in the photo)'),
      this.userList,
      h('div', { class: 'row' },
        h('label', {}, 'seed ', this.seedInput),
        h('button', { onClick: () => this.randomizeSeed() }, 'randomize'),
        h('label', {}, 'style ', this.styleSelect),
        this.generateBtn,
        this.blockNote,
      ),
      this.taskPanel,
      this.resultPanel,
      h('h3', {}, 'History'),
      this.historyStrip,
      this.toasts,
    );
  }

  async refresh(): Promise<void> {
    try {
      const [templates, users] = await Promise.all([
        this.api.listTemplates(), this.api.listUsers(),
      ]);
      this.state = { ...this.state, templates, users };
      this.renderGallery();
      this.renderUsers();
      this.renderGate();
    } catch (err) {
      this.surface(err);
    }
  }

  private renderGallery(): void {
    replaceChildren(this.gallery, ...this.state.templates.map((t) =>
      h('figure', {
        class: t.id === this.state.selectedTemplateId
          ? 'template selected' : 'template',
        dataset: { templateId: t.id },
        onClick: () => {
          this.state = { ...this.state, selectedTemplateId: t.id };
          this.renderGallery();
          this.renderGate();
        },
      },
      h('img', { src: this.api.templateImageUrl(t.id), alt: t.id }),
      h('figcaption', {}, `${t.id} (${t.faces} face${t.faces === 1 ? '' : 's'})`),
      ),
    ));
  }

  private renderUsers(): void {
    const trained = this.state.users.filter((u) => u.trained);
    replaceChildren(this.userList, ...trained.map((u) => {
      const selected = this.state.selectedUserIds.includes(u.user_id);
      const order = this.state.selectedUserIds.indexOf(u.user_id);
      return h('div', {
        class: selected ? 'user selected' : 'user',
        dataset: { userId: u.user_id },
      },
      h('label', {},
        h('input', {
          type: 'checkbox', checked: selected,
          onChange: () => {
            this.state = toggleUser(this.state, u.user_id);
            this.renderUsers();
            this.renderGate();
          },
        }),
        ` ${u.user_id}`,
        selected ? h('span', { class: 'order' }, ` #${order + 1}`) : null,
      ),
      selected ? h('button', {
        class: 'reorder', title: 'move up (further left)',
        onClick: () => {
          this.state = moveUser(this.state, u.user_id, -1);
          this.renderUsers();
        },
      }, 'up') : null,
      selected ? h('button', {
        class: 'reorder', title: 'move down (further right)',
        onClick: () => {
          this.state = moveUser(this.state, u.user_id, 1);
          this.renderUsers();
        },
      }, 'down') : null,
      );
    }));
  }

  renderGate(): void {
    const reason = generateBlockReason(this.state);
    this.generateBtn.disabled = reason !== null;
    this.blockNote.textContent = reason ?? '';
  }

  private randomizeSeed(): void {
    this.state.seed = randomSeed();
    this.seedInput.value = String(this.state.seed);
  }

  async generate(): Promise<void> {
    const reason = generateBlockReason(this.state);
    if (reason !== null) {
      this.blockNote.textContent = reason;
      return;
    }
    const template = selectedTemplate(this.state)!;
    this.generateBtn.disabled = true;
    try {
      const taskId = await this.api.createGeneration(
        template.id, this.state.selectedUserIds, {
          seed: this.state.seed, style: this.state.style,
        });
      this.watchTask(taskId, template.id);
    } catch (err) {
      // re-enable per the gate but let surface() own the inline message
      this.generateBtn.disabled = generateBlockReason(this.state) !== null;
      this.surface(err);
    }
  }

  private watchTask(taskId: string, templateId: string): void {
    this.poller?.stop();
    this.poller = pollUntilTerminal(
      () => this.api.getTask(taskId),
      (task) => {
        replaceChildren(this.taskPanel,
          h('span', { dataset: { state: task.state } }, `task: ${task.state}`));
      },
      1000,
    );
    this.poller.done.then((task) => {
      if (task.state === 'done') {
        this.showResult(task, templateId);
      } else {
        toast(this.toasts, 'generation_failed', task.message || 'generation failed');
      }
      this.renderGate();
    }).catch((err) => this.surface(err));
  }

  private showResult(task: GenerationTask, templateId: string): void {
    const url = this.api.resultImageUrl(task.task_id);
    const seed = this.state.seed;
    const userIds = [...this.state.selectedUserIds];
    const provenance = h('details', { class: 'provenance' },
      h('summary', {}, 'provenance'),
      h('pre', { dataset: { taskId: task.task_id } }, 'loading...'));
    provenance.addEventListener('toggle', () => {
      if ((provenance as HTMLDetailsElement).open) {
        void fetch(`/api/v1/results/${task.task_id}/provenance`)
          .then((r) => r.text())
          .then((text) => { provenance.querySelector('pre')!.textContent = text; });
      }
    }, { once: true });

    replaceChildren(this.resultPanel,
      h('img', { class: 'result-image', src: url, alt: `result ${task.task_id}` }),
      provenance,
    );
    this.state = recordResult(this.state, {
      taskId: task.task_id, seed, templateId, userIds, imageUrl: url,
    });
    this.renderHistory();
  }

  private renderHistory(): void {
    replaceChildren(this.historyStrip, ...this.state.history.map((entry) =>
      h('figure', { class: 'history-entry', dataset: { taskId: entry.taskId } },
        h('img', { src: entry.imageUrl, alt: entry.taskId }),
        h('figcaption', {}, `seed ${entry.seed}`),
        h('button', {
          class: 'reroll',
          onClick: () => {
            this.state = rerollFrom(this.state, entry);
            this.seedInput.value = String(this.state.seed);
            this.renderGallery();
            this.renderUsers();
            this.renderGate();
            void this.generate();
          },
        }, 're-roll'),
      ),
    ));
  }

  private surface(err: unknown): void {
    if (err instanceof ApiError) {
      // 422-class responses render inline next to the blocking control
      if (err.status === 422) {
        this.blockNote.textContent = err.message;
        return;
      }
      toast(this.toasts, err.code, err.message);
    } else {
      toast(this.toasts, 'error', String(err));
    }
  }
}
