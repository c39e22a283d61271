/**
 * Annotation session state machine.
 *
 * A pure reducer over (state, event) pairs that returns the next state plus
 * at most one IO effect for the driver to perform. Keeping it pure pins the
 * contract the spec of this screen cares about:
 *   - exactly one submission per task; choices are ignored while one is
 *     in flight, so the UI cannot double-submit;
 *   - optimistic advance with rollback: a rejected submission returns to the
 *     same task with the draft cleared and the reason in a banner;
 *   - a network failure parks the submission locally and offers retry, so an
 *     answer is never lost;
 *   - a duplicate (either a repeated identical answer or a 409 conflict)
 *     shows "already submitted" and advances.
 */

import {
  DecisionBody,
  EmpathyChoice,
  FactDecision,
  KIND_EMPATHY,
  SubmissionBody,
  Task,
} from './api-schema.v1.js';

// ── Keyboard contract ──

/** Keys 1/2/3 pick the three empathy options, in button order. */
export const EMPATHY_KEYMAP: Readonly<Record<string, EmpathyChoice>> = {
  '1': 'first_shown',
  '2': 'second_shown',
  '3': 'equal',
};

/** Button wording shown to annotators, with the bound key. */
export const EMPATHY_OPTIONS: readonly {
  key: string;
  label: EmpathyChoice;
  caption: string;
}[] = [
  { key: '1', label: 'first_shown', caption: 'Response 1 is more empathetic' },
  { key: '2', label: 'second_shown', caption: 'Response 2 is more empathetic' },
  { key: '3', label: 'equal', caption: 'Both responses are equally empathetic' },
];

// ── State ──

export interface Banner {
  tone: 'info' | 'error';
  text: string;
}

/** What one task's answer looks like before it is sent. */
export type Draft =
  | { kind: 'empathy'; label: EmpathyChoice | null }
  | { kind: 'fact_review'; decisions: (DecisionBody | null)[] };

/** The task as rendered: API payload plus client-side progress counters. */
export interface UITaskView {
  task: Task;
  position: number;    // 1-based ordinal within this sitting
  completed: number;   // submissions acknowledged this sitting
  remaining: number;   // server-reported, includes the current task
  draft: Draft;
}

export type SessionState =
  | { phase: 'loading'; completed: number; banner: Banner | null }
  | { phase: 'task'; view: UITaskView; banner: Banner | null }
  | { phase: 'submitting'; view: UITaskView; pending: SubmissionBody }
  | { phase: 'retry'; view: UITaskView; pending: SubmissionBody; message: string }
  | { phase: 'done'; completed: number }
  | { phase: 'fatal'; message: string };

export type SessionEvent =
  | { type: 'task_loaded'; task: Task; remaining: number }
  | { type: 'batch_done' }
  | { type: 'load_failed'; message: string }
  | { type: 'choose'; label: EmpathyChoice }
  | { type: 'decide_fact'; index: number; decision: FactDecision; category: string | null }
  | { type: 'submit_review' }
  | { type: 'submit_ok'; status: 'accepted' | 'duplicate' }
  | { type: 'submit_conflict' }
  | { type: 'submit_rejected'; message: string }
  | { type: 'submit_failed'; message: string }
  | { type: 'retry' };

export type Effect =
  | { kind: 'fetch_next' }
  | { kind: 'submit'; body: SubmissionBody }
  | { kind: 'none' };

const NONE: Effect = { kind: 'none' };

export function initialState(): SessionState {
  return { phase: 'loading', completed: 0, banner: null };
}

function emptyDraft(task: Task): Draft {
  return task.kind === KIND_EMPATHY
    ? { kind: 'empathy', label: null }
    : { kind: 'fact_review', decisions: task.payload.facts.map(() => null) };
}

const ALREADY_SUBMITTED: Banner = {
  tone: 'info',
  text: 'Task already submitted; moving to the next one.',
};

// ── Reducer ──

export function reduce(
  state: SessionState,
  event: SessionEvent,
  annotator: string,
): [SessionState, Effect] {
  switch (state.phase) {
    case 'loading':
      if (event.type === 'task_loaded') {
        const view: UITaskView = {
          task: event.task,
          position: state.completed + 1,
          completed: state.completed,
          remaining: event.remaining,
          draft: emptyDraft(event.task),
        };
        return [{ phase: 'task', view, banner: state.banner }, NONE];
      }
      if (event.type === 'batch_done') {
        return [{ phase: 'done', completed: state.completed }, NONE];
      }
      if (event.type === 'load_failed') {
        return [{ phase: 'fatal', message: event.message }, NONE];
      }
      return [state, NONE];

    case 'task':
      if (event.type === 'choose' && state.view.draft.kind === 'empathy') {
        const body: SubmissionBody = {
          task_id: state.view.task.task_id,
          annotator,
          label: event.label,
        };
        const view: UITaskView = {
          ...state.view,
          draft: { kind: 'empathy', label: event.label },
        };
        return [{ phase: 'submitting', view, pending: body }, { kind: 'submit', body }];
      }
      if (event.type === 'decide_fact' && state.view.draft.kind === 'fact_review') {
        const decisions = [...state.view.draft.decisions];
        if (event.index < 0 || event.index >= decisions.length) return [state, NONE];
        decisions[event.index] = { decision: event.decision, category: event.category };
        const view: UITaskView = {
          ...state.view,
          draft: { kind: 'fact_review', decisions },
        };
        return [{ phase: 'task', view, banner: state.banner }, NONE];
      }
      if (event.type === 'submit_review' && state.view.draft.kind === 'fact_review') {
        const decisions = state.view.draft.decisions;
        if (decisions.some((d) => d === null)) {
          const banner: Banner = {
            tone: 'error',
            text: 'Decide every fact before submitting.',
          };
          return [{ phase: 'task', view: state.view, banner }, NONE];
        }
        const body: SubmissionBody = {
          task_id: state.view.task.task_id,
          annotator,
          decisions: decisions as DecisionBody[],
        };
        return [
          { phase: 'submitting', view: state.view, pending: body },
          { kind: 'submit', body },
        ];
      }
      return [state, NONE];

    case 'submitting':
      if (event.type === 'submit_ok') {
        const banner = event.status === 'duplicate' ? ALREADY_SUBMITTED : null;
        return [
          { phase: 'loading', completed: state.view.completed + 1, banner },
          { kind: 'fetch_next' },
        ];
      }
      if (event.type === 'submit_conflict') {
        // The journal already holds a different answer; the first one wins.
        return [
          { phase: 'loading', completed: state.view.completed + 1, banner: ALREADY_SUBMITTED },
          { kind: 'fetch_next' },
        ];
      }
      if (event.type === 'submit_rejected') {
        // Roll the optimistic selection back and surface the reason.
        const view: UITaskView = { ...state.view, draft: emptyDraft(state.view.task) };
        return [
          { phase: 'task', view, banner: { tone: 'error', text: event.message } },
          NONE,
        ];
      }
      if (event.type === 'submit_failed') {
        // Hold the answer locally; nothing is lost, the annotator retries.
        return [
          {
            phase: 'retry',
            view: state.view,
            pending: state.pending,
            message: event.message,
          },
          NONE,
        ];
      }
      return [state, NONE];

    case 'retry':
      if (event.type === 'retry') {
        return [
          { phase: 'submitting', view: state.view, pending: state.pending },
          { kind: 'submit', body: state.pending },
        ];
      }
      return [state, NONE];

    case 'done':
    case 'fatal':
      return [state, NONE];
  }
}
