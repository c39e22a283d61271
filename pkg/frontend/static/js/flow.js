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
import { KIND_EMPATHY, } from './api-schema.v1.js';
// ── Keyboard contract ──
/** Keys 1/2/3 pick the three empathy options, in button order. */
export const EMPATHY_KEYMAP = {
    '1': 'first_shown',
    '2': 'second_shown',
    '3': 'equal',
};
/** Button wording shown to annotators, with the bound key. */
export const EMPATHY_OPTIONS = [
    { key: '1', label: 'first_shown', caption: 'Response 1 is more empathetic' },
    { key: '2', label: 'second_shown', caption: 'Response 2 is more empathetic' },
    { key: '3', label: 'equal', caption: 'Both responses are equally empathetic' },
];
const NONE = { kind: 'none' };
export function initialState() {
    return { phase: 'loading', completed: 0, banner: null };
}
function emptyDraft(task) {
    return task.kind === KIND_EMPATHY
        ? { kind: 'empathy', label: null }
        : { kind: 'fact_review', decisions: task.payload.facts.map(() => null) };
}
const ALREADY_SUBMITTED = {
    tone: 'info',
    text: 'Task already submitted; moving to the next one.',
};
// ── Reducer ──
export function reduce(state, event, annotator) {
    switch (state.phase) {
        case 'loading':
            if (event.type === 'task_loaded') {
                const view = {
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
                const body = {
                    task_id: state.view.task.task_id,
                    annotator,
                    label: event.label,
                };
                const view = {
                    ...state.view,
                    draft: { kind: 'empathy', label: event.label },
                };
                return [{ phase: 'submitting', view, pending: body }, { kind: 'submit', body }];
            }
            if (event.type === 'decide_fact' && state.view.draft.kind === 'fact_review') {
                const decisions = [...state.view.draft.decisions];
                if (event.index < 0 || event.index >= decisions.length)
                    return [state, NONE];
                decisions[event.index] = { decision: event.decision, category: event.category };
                const view = {
                    ...state.view,
                    draft: { kind: 'fact_review', decisions },
                };
                return [{ phase: 'task', view, banner: state.banner }, NONE];
            }
            if (event.type === 'submit_review' && state.view.draft.kind === 'fact_review') {
                const decisions = state.view.draft.decisions;
                if (decisions.some((d) => d === null)) {
                    const banner = {
                        tone: 'error',
                        text: 'Decide every fact before submitting.',
                    };
                    return [{ phase: 'task', view: state.view, banner }, NONE];
                }
                const body = {
                    task_id: state.view.task.task_id,
                    annotator,
                    decisions: decisions,
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
                const view = { ...state.view, draft: emptyDraft(state.view.task) };
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
