/**
 * Session driver: owns the state machine, performs its IO effects through
 * the client, and notifies the view layer after every transition.
 *
 * The server stays the source of truth for task assignment — the driver only
 * ever asks for "the next task for this annotator", so reloading the page
 * resumes the same task and two tabs cannot fork the batch.
 */
import { ApiError, NetworkError } from './client.js';
import { EMPATHY_KEYMAP, initialState, reduce, } from './flow.js';
export class AnnotationSession {
    client;
    annotator;
    onChange;
    state = initialState();
    constructor(client, annotator, onChange) {
        this.client = client;
        this.annotator = annotator;
        this.onChange = onChange;
    }
    /** Fetch the first task and start the loop. */
    async start() {
        this.onChange(this.state);
        await this.perform({ kind: 'fetch_next' });
    }
    /** Empathy keyboard shortcut; true when the key was consumed. */
    handleKey(key) {
        const label = EMPATHY_KEYMAP[key];
        if (!label)
            return false;
        if (this.state.phase !== 'task' || this.state.view.draft.kind !== 'empathy') {
            return false;
        }
        this.choose(label);
        return true;
    }
    choose(label) {
        this.dispatch({ type: 'choose', label });
    }
    decideFact(index, decision, category) {
        this.dispatch({ type: 'decide_fact', index, decision, category });
    }
    submitReview() {
        this.dispatch({ type: 'submit_review' });
    }
    retry() {
        this.dispatch({ type: 'retry' });
    }
    dispatch(event) {
        const [next, effect] = reduce(this.state, event, this.annotator);
        this.state = next;
        this.onChange(next);
        if (effect.kind !== 'none')
            void this.perform(effect);
    }
    async perform(effect) {
        if (effect.kind === 'fetch_next') {
            try {
                const reply = await this.client.nextTask(this.annotator);
                this.dispatch(reply.task === null
                    ? { type: 'batch_done' }
                    : { type: 'task_loaded', task: reply.task, remaining: reply.remaining });
            }
            catch (error) {
                this.dispatch({ type: 'load_failed', message: String(error) });
            }
            return;
        }
        if (effect.kind === 'submit') {
            try {
                const reply = await this.client.submit(effect.body);
                this.dispatch({ type: 'submit_ok', status: reply.status });
            }
            catch (error) {
                if (error instanceof ApiError && error.status === 409) {
                    this.dispatch({ type: 'submit_conflict' });
                }
                else if (error instanceof NetworkError) {
                    this.dispatch({ type: 'submit_failed', message: error.message });
                }
                else {
                    this.dispatch({ type: 'submit_rejected', message: String(error) });
                }
            }
        }
    }
}
