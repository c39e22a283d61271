/**
 * Session driver: owns the state machine, performs its IO effects through
 * the client, and notifies the view layer after every transition.
 *
 * The server stays the source of truth for task assignment — the driver only
 * ever asks for "the next task for this annotator", so reloading the page
 * resumes the same task and two tabs cannot fork the batch.
 */

import { EmpathyChoice, FactDecision } from './api-schema.v1.js';
import { AnnotationClient, ApiError, NetworkError } from './client.js';
import {
  Effect,
  EMPATHY_KEYMAP,
  initialState,
  reduce,
  SessionEvent,
  SessionState,
} from './flow.js';

export class AnnotationSession {
  state: SessionState = initialState();

  constructor(
    private readonly client: AnnotationClient,
    private readonly annotator: string,
    private readonly onChange: (state: SessionState) => void,
  ) {}

  /** Fetch the first task and start the loop. */
  async start(): Promise<void> {
    this.onChange(this.state);
    await this.perform({ kind: 'fetch_next' });
  }

  /** Empathy keyboard shortcut; true when the key was consumed. */
  handleKey(key: string): boolean {
    const label = EMPATHY_KEYMAP[key];
    if (!label) return false;
    if (this.state.phase !== 'task' || this.state.view.draft.kind !== 'empathy') {
      return false;
    }
    this.choose(label);
    return true;
  }

  choose(label: EmpathyChoice): void {
    this.dispatch({ type: 'choose', label });
  }

  decideFact(index: number, decision: FactDecision, category: string | null): void {
    this.dispatch({ type: 'decide_fact', index, decision, category });
  }

  submitReview(): void {
    this.dispatch({ type: 'submit_review' });
  }

  retry(): void {
    this.dispatch({ type: 'retry' });
  }

  private dispatch(event: SessionEvent): void {
    const [next, effect] = reduce(this.state, event, this.annotator);
    this.state = next;
    this.onChange(next);
    if (effect.kind !== 'none') void this.perform(effect);
  }

  private async perform(effect: Effect): Promise<void> {
    if (effect.kind === 'fetch_next') {
      try {
        const reply = await this.client.nextTask(this.annotator);
        this.dispatch(
          reply.task === null
            ? { type: 'batch_done' }
            : { type: 'task_loaded', task: reply.task, remaining: reply.remaining },
        );
      } catch (error) {
        this.dispatch({ type: 'load_failed', message: String(error) });
      }
      return;
    }
    if (effect.kind === 'submit') {
      try {
        const reply = await this.client.submit(effect.body);
        this.dispatch({ type: 'submit_ok', status: reply.status });
      } catch (error) {
        if (error instanceof ApiError && error.status === 409) {
          this.dispatch({ type: 'submit_conflict' });
        } else if (error instanceof NetworkError) {
          this.dispatch({ type: 'submit_failed', message: error.message });
        } else {
          this.dispatch({ type: 'submit_rejected', message: String(error) });
        }
      }
    }
  }
}
