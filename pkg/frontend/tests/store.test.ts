import { describe, expect, it } from 'vitest';

import {
  generateBlockReason,
  initialStudioState,
  moveUser,
  recordResult,
  rerollFrom,
  toggleUser,
  uploadGate,
} from '../src/store.js';
import { TemplateInfo, UserProfile } from '../src/types.js';

const tpl = (id: string, faces: number): TemplateInfo =>
  ({ id, faces, height: 100, width: 100 });
const user = (id: string, trained = true): UserProfile =>
  ({ user_id: id, image_count: 5, trained, best_score: 0.9 });

describe('uploadGate', () => {
  it('blocks below five with a hint citing the minimum', () => {
    const gate = uploadGate(3);
    expect(gate.canStart).toBe(false);
    expect(gate.hint).toContain('at least 5');
  });

  it('blocks above twenty', () => {
    expect(uploadGate(21).canStart).toBe(false);
    expect(uploadGate(21).hint).toContain('20');
  });

  it('opens within the 5-20 range', () => {
    expect(uploadGate(5).canStart).toBe(true);
    expect(uploadGate(20).canStart).toBe(true);
  });
});

describe('generateBlockReason', () => {
  it('requires a template and users', () => {
    let state = initialStudioState();
    expect(generateBlockReason(state)).toMatch(/template/);
    state = { ...state, templates: [tpl('a.png', 1)], selectedTemplateId: 'a.png' };
    expect(generateBlockReason(state)).toMatch(/user/);
  });

  it('blocks user-count mismatch against the template face count', () => {
    const state = {
      ...initialStudioState(),
      templates: [tpl('solo.png', 1)],
      users: [user('alice'), user('bob')],
      selectedTemplateId: 'solo.png',
      selectedUserIds: ['alice', 'bob'],
    };
    const reason = generateBlockReason(state);
    expect(reason).toContain('1 face');
    expect(reason).toContain('2');
  });

  it('blocks untrained users by name', () => {
    const state = {
      ...initialStudioState(),
      templates: [tpl('solo.png', 1)],
      users: [user('alice', false)],
      selectedTemplateId: 'solo.png',
      selectedUserIds: ['alice'],
    };
    expect(generateBlockReason(state)).toContain('alice');
  });

  it('passes when counts line up', () => {
    const state = {
      ...initialStudioState(),
      templates: [tpl('duo.png', 2)],
      users: [user('alice'), user('bob')],
      selectedTemplateId: 'duo.png',
      selectedUserIds: ['alice', 'bob'],
    };
    expect(generateBlockReason(state)).toBeNull();
  });
});

describe('user ordering', () => {
  it('toggle adds in selection order and removes cleanly', () => {
    let state = initialStudioState();
    state = toggleUser(state, 'a');
    state = toggleUser(state, 'b');
    expect(state.selectedUserIds).toEqual(['a', 'b']);
    state = toggleUser(state, 'a');
    expect(state.selectedUserIds).toEqual(['b']);
  });

  it('moveUser reorders within bounds', () => {
    let state = { ...initialStudioState(), selectedUserIds: ['a', 'b', 'c'] };
    state = moveUser(state, 'c', -1);
    expect(state.selectedUserIds).toEqual(['a', 'c', 'b']);
    state = moveUser(state, 'a', -1);
    expect(state.selectedUserIds).toEqual(['a', 'c', 'b']); // no-op at the edge
  });
});

describe('history and re-roll', () => {
  it('re-roll restores the entry selection at seed+1', () => {
    let state = {
      ...initialStudioState(),
      templates: [tpl('solo.png', 1)],
      users: [user('alice')],
      selectedTemplateId: 'solo.png',
      selectedUserIds: ['alice'],
      seed: 41,
    };
    const entry = {
      taskId: 't1', seed: 41, templateId: 'solo.png',
      userIds: ['alice'], imageUrl: '/api/v1/results/t1/image',
    };
    state = recordResult(state, entry);
    expect(state.history[0].taskId).toBe('t1');
    const rerolled = rerollFrom(state, entry);
    expect(rerolled.seed).toBe(42);
    expect(rerolled.selectedTemplateId).toBe('solo.png');
    expect(rerolled.selectedUserIds).toEqual(['alice']);
  });

  it('newest history entry comes first', () => {
    let state = initialStudioState();
    const mk = (taskId: string, seed: number) =>
      ({ taskId, seed, templateId: 't', userIds: ['u'], imageUrl: 'x' });
    state = recordResult(state, mk('t1', 1));
    state = recordResult(state, mk('t2', 2));
    expect(state.history.map((e) => e.taskId)).toEqual(['t2', 't1']);
  });
});
