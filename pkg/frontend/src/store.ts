/**
 * Studio state and gating rules. Pure data + reducers so every rule the
 * UI enforces (upload gating, count mismatch, seed handling, history) is
 * unit-testable without a DOM.
 */

import { TemplateInfo, UserProfile } from './types.js';

export const MIN_TRAINING_IMAGES = 5;
export const MAX_TRAINING_IMAGES = 20;

export interface HistoryEntry {
  taskId: string;
  seed: number;
  templateId: string;
  userIds: string[];
  imageUrl: string;
}

export interface StudioState {
  templates: TemplateInfo[];
  users: UserProfile[];
  selectedTemplateId: string | null;
  /** order matters: index i maps to face i, left to right */
  selectedUserIds: string[];
  seed: number;
  style: string;
  history: HistoryEntry[];
}

export function initialStudioState(): StudioState {
  return {
    templates: [],
    users: [],
    selectedTemplateId: null,
    selectedUserIds: [],
    seed: 0,
    style: 'realistic',
    history: [],
  };
}

export function selectedTemplate(state: StudioState): TemplateInfo | null {
  return state.templates.find((t) => t.id === state.selectedTemplateId) ?? null;
}

export function toggleUser(state: StudioState, userId: string): StudioState {
  const selected = state.selectedUserIds.includes(userId)
    ? state.selectedUserIds.filter((u) => u !== userId)
    : [...state.selectedUserIds, userId];
  return { ...state, selectedUserIds: selected };
}

export function moveUser(state: StudioState, userId: string, delta: -1 | 1): StudioState {
  const ids = [...state.selectedUserIds];
  const from = ids.indexOf(userId);
  const to = from + delta;
  if (from < 0 || to < 0 || to >= ids.length) return state;
  ids.splice(from, 1);
  ids.splice(to, 0, userId);
  return { ...state, selectedUserIds: ids };
}

/** Why Generate is blocked, or null when it may proceed. */
export function generateBlockReason(state: StudioState): string | null {
  const template = selectedTemplate(state);
  if (!template) return 'select a template';
  if (state.selectedUserIds.length === 0) return 'select at least one user';
  const untrained = state.selectedUserIds.filter(
    (uid) => !state.users.find((u) => u.user_id === uid)?.trained);
  if (untrained.length > 0) return `not trained yet: ${untrained.join(', ')}`;
  if (state.selectedUserIds.length !== template.faces) {
    return `template has ${template.faces} face(s) but ${state.selectedUserIds.length} `
      + 'user(s) are selected';
  }
  return null;
}

export function recordResult(
  state: StudioState, entry: HistoryEntry,
): StudioState {
  return { ...state, history: [entry, ...state.history] };
}

/** Re-roll: same template and users, seed+1, ready to submit again. */
export function rerollFrom(state: StudioState, entry: HistoryEntry): StudioState {
  return {
    ...state,
    selectedTemplateId: entry.templateId,
    selectedUserIds: [...entry.userIds],
    seed: entry.seed + 1,
  };
}

export function randomSeed(): number {
  return Math.floor(Math.random() * 2 ** 31);
}

// -- train view gating ----------------------------------------------------

export interface UploadGate {
  canStart: boolean;
  hint: string;
}

/** Start Training stays disabled outside the 5-20 photo range. */
export function uploadGate(count: number): UploadGate {
  if (count < MIN_TRAINING_IMAGES) {
    return {
      canStart: false,
      hint: `need at least ${MIN_TRAINING_IMAGES} photos (${count} uploaded)`,
    };
  }
  if (count > MAX_TRAINING_IMAGES) {
    return {
      canStart: false,
      hint: `at most ${MAX_TRAINING_IMAGES} photos allowed (${count} uploaded)`,
    };
  }
  return { canStart: true, hint: `${count} photos ready` };
}
