/**
 * DOM rendering for the annotation screens.
 *
 * Two screens: a three-way empathy comparison (question on top, the two
 * blinded responses side by side, three choice buttons) and a fact review
 * (original and edited responses side by side, one confirm/reject row per
 * flagged fact with an optional category picker).
 *
 * Everything is built with createElement and textContent — response text is
 * never interpreted as markup — and only fields from the parsed API payload
 * are read, so nothing the server blinded can appear on screen.
 */
import { EMPATHY_OPTIONS } from './flow.js';
export function render(root, state, handlers) {
    root.replaceChildren(build(state, handlers));
}
function build(state, handlers) {
    switch (state.phase) {
        case 'loading':
            return screen('loading', [
                bannerBox(state.banner),
                el('p', 'status', 'Loading the next task…'),
            ]);
        case 'done':
            return screen('done', [
                el('h1', '', 'Batch complete'),
                el('p', 'status', `${state.completed} task(s) submitted. Thank you!`),
            ]);
        case 'fatal':
            return screen('fatal', [
                el('h1', '', 'Something went wrong'),
                el('p', 'status error', state.message),
            ]);
        case 'task':
            return taskScreen(state.view, state.banner, false, handlers);
        case 'submitting':
            return taskScreen(state.view, { tone: 'info', text: 'Saving…' }, true, handlers);
        case 'retry':
            return taskScreen(state.view, { tone: 'error', text: `Submission failed: ${state.message}` }, true, handlers, retryButton(handlers));
    }
}
function taskScreen(view, banner, busy, handlers, extra) {
    const body = view.task.kind === 'empathy_pair'
        ? empathyBody(view, view.task.payload, busy, handlers)
        : reviewBody(view, view.task.payload, busy, handlers);
    const children = [header(view), bannerBox(banner), body];
    if (extra)
        children.push(extra);
    return screen(view.task.kind, children);
}
// ── Empathy comparison screen ──
function empathyBody(view, payload, busy, handlers) {
    const chosen = view.draft.kind === 'empathy' ? view.draft.label : null;
    const choices = EMPATHY_OPTIONS.map((option) => {
        const button = el('button', 'choice', `${option.caption}`);
        button.dataset.key = option.key;
        button.dataset.label = option.label;
        button.disabled = busy;
        if (chosen === option.label)
            button.classList.add('selected');
        button.appendChild(el('kbd', '', option.key));
        button.addEventListener('click', () => handlers.onChoose(option.label));
        return button;
    });
    return el('div', 'empathy', [
        el('blockquote', 'question', payload.patient_question),
        el('div', 'panes', [
            pane('Response 1', payload.response_first),
            pane('Response 2', payload.response_second),
        ]),
        el('p', 'prompt', 'Which response is more empathetic?'),
        el('div', 'choices', choices),
    ]);
}
// ── Fact review screen ──
function reviewBody(view, payload, busy, handlers) {
    const decisions = view.draft.kind === 'fact_review' ? view.draft.decisions : [];
    const rows = payload.facts.map((entry, index) => {
        const current = decisions[index] ?? null;
        const direction = el('span', `direction ${entry.direction}`, entry.direction === 'added' ? 'added in the edit' : 'missing from the edit');
        const picker = categoryPicker(payload.categories, current?.category ?? null, busy);
        const buttons = ['confirmed', 'rejected'].map((decision) => {
            const button = el('button', `decision ${decision}`, decision);
            button.disabled = busy;
            if (current?.decision === decision)
                button.classList.add('selected');
            button.addEventListener('click', () => handlers.onDecideFact(index, decision, valueOf(picker)));
            return button;
        });
        picker.addEventListener('change', () => {
            if (current)
                handlers.onDecideFact(index, current.decision, valueOf(picker));
        });
        return el('li', 'fact', [direction, el('p', 'fact-text', entry.fact), ...buttons, picker]);
    });
    const submit = el('button', 'submit-review', 'Submit review');
    submit.disabled = busy || decisions.some((d) => d === null);
    submit.addEventListener('click', () => handlers.onSubmitReview());
    return el('div', 'fact-review', [
        el('div', 'panes', [
            pane('Original response', payload.original_text),
            pane('Edited response', payload.edited_text),
        ]),
        el('p', 'prompt', 'Confirm each flagged fact, or reject the flag.'),
        el('ol', 'facts', rows),
        submit,
    ]);
}
function categoryPicker(categories, selected, busy) {
    const picker = document.createElement('select');
    picker.className = 'category';
    picker.disabled = busy;
    for (const category of ['', ...categories]) {
        const option = document.createElement('option');
        option.value = category;
        option.textContent = category || 'no category';
        option.selected = category !== '' && category === selected;
        picker.appendChild(option);
    }
    return picker;
}
function valueOf(picker) {
    return picker.value === '' ? null : picker.value;
}
// ── Shared pieces ──
function header(view) {
    const title = view.task.kind === 'empathy_pair' ? 'Empathy comparison' : 'Fact review';
    return el('header', '', [
        el('h1', '', title),
        el('p', 'progress', `Task ${view.position} · ${view.remaining} remaining`),
    ]);
}
function pane(title, text) {
    return el('section', 'pane', [el('h2', '', title), el('p', 'response', text)]);
}
function bannerBox(banner) {
    if (!banner)
        return el('div', 'banner empty', '');
    return el('div', `banner ${banner.tone}`, banner.text);
}
function retryButton(handlers) {
    const button = el('button', 'retry', 'Retry submission');
    button.addEventListener('click', () => handlers.onRetry());
    return el('div', 'retry-box', [button]);
}
function screen(name, children) {
    return el('main', `screen ${name}`, children.filter((c) => c !== null));
}
function el(tag, className, content) {
    const node = document.createElement(tag);
    if (className)
        node.className = className;
    if (typeof content === 'string') {
        node.textContent = content;
    }
    else {
        node.append(...content);
    }
    return node;
}
