/**
 * Annotation service wire format, version 1.
 *
 * This file is the only coupling to the backend: it mirrors the JSON the
 * service emits and accepts, nothing more. Parsers are deliberately strict
 * about task objects — a task carrying any key beyond the published ones
 * (for example a leaked `hidden` block with display order or response
 * provenance) is rejected outright, so blinded data can never even reach
 * the rendering layer.
 */
export const SCHEMA_VERSION = 'v1';
// ── Vocabulary ──
export const KIND_EMPATHY = 'empathy_pair';
export const KIND_FACT_REVIEW = 'fact_review';
/** Empathy labels in display space; the server unmaps them on export. */
export const EMPATHY_CHOICES = ['first_shown', 'second_shown', 'equal'];
export const FACT_DECISIONS = ['confirmed', 'rejected'];
// ── Strict parsing ──
export class SchemaError extends Error {
}
function fail(where, message) {
    throw new SchemaError(`${where}: ${message}`);
}
function asRecord(value, where) {
    if (typeof value !== 'object' || value === null || Array.isArray(value)) {
        fail(where, 'expected an object');
    }
    return value;
}
/** Reject any key outside the published schema; order matters for blinding. */
function exactKeys(obj, keys, where) {
    for (const key of Object.keys(obj)) {
        if (!keys.includes(key))
            fail(where, `unexpected key '${key}'`);
    }
    for (const key of keys) {
        if (!(key in obj))
            fail(where, `missing key '${key}'`);
    }
}
function str(obj, key, where) {
    const value = obj[key];
    if (typeof value !== 'string')
        fail(where, `'${key}' must be a string`);
    return value;
}
function num(obj, key, where) {
    const value = obj[key];
    if (typeof value !== 'number' || !Number.isFinite(value)) {
        fail(where, `'${key}' must be a finite number`);
    }
    return value;
}
function parseEmpathyPayload(value, where) {
    const obj = asRecord(value, where);
    exactKeys(obj, ['patient_question', 'response_first', 'response_second'], where);
    return {
        patient_question: str(obj, 'patient_question', where),
        response_first: str(obj, 'response_first', where),
        response_second: str(obj, 'response_second', where),
    };
}
function parseFactReviewPayload(value, where) {
    const obj = asRecord(value, where);
    exactKeys(obj, ['original_text', 'edited_text', 'facts', 'categories'], where);
    const facts = obj.facts;
    if (!Array.isArray(facts))
        fail(where, "'facts' must be an array");
    const categories = obj.categories;
    if (!Array.isArray(categories) || !categories.every((c) => typeof c === 'string')) {
        fail(where, "'categories' must be an array of strings");
    }
    return {
        original_text: str(obj, 'original_text', where),
        edited_text: str(obj, 'edited_text', where),
        facts: facts.map((entry, i) => {
            const fact = asRecord(entry, `${where}.facts[${i}]`);
            exactKeys(fact, ['fact', 'direction'], `${where}.facts[${i}]`);
            return {
                fact: str(fact, 'fact', `${where}.facts[${i}]`),
                direction: str(fact, 'direction', `${where}.facts[${i}]`),
            };
        }),
        categories: categories,
    };
}
export function parseTask(value, where = 'task') {
    const obj = asRecord(value, where);
    exactKeys(obj, ['task_id', 'kind', 'exchange_id', 'payload'], where);
    const base = {
        task_id: str(obj, 'task_id', where),
        exchange_id: str(obj, 'exchange_id', where),
    };
    const kind = str(obj, 'kind', where);
    if (kind === KIND_EMPATHY) {
        return { ...base, kind, payload: parseEmpathyPayload(obj.payload, `${where}.payload`) };
    }
    if (kind === KIND_FACT_REVIEW) {
        return { ...base, kind, payload: parseFactReviewPayload(obj.payload, `${where}.payload`) };
    }
    fail(where, `unknown task kind '${kind}'`);
}
export function parseNextTaskReply(value) {
    const where = 'next-task reply';
    const obj = asRecord(value, where);
    exactKeys(obj, ['task', 'remaining'], where);
    return {
        task: obj.task === null ? null : parseTask(obj.task, `${where}.task`),
        remaining: num(obj, 'remaining', where),
    };
}
export function parseSubmissionReply(value) {
    const where = 'submission reply';
    const obj = asRecord(value, where);
    exactKeys(obj, ['status', 'task_id', 'remaining'], where);
    const status = str(obj, 'status', where);
    if (status !== 'accepted' && status !== 'duplicate') {
        fail(where, `unknown status '${status}'`);
    }
    return {
        status,
        task_id: str(obj, 'task_id', where),
        remaining: num(obj, 'remaining', where),
    };
}
export function parseHealthReply(value) {
    const where = 'health reply';
    const obj = asRecord(value, where);
    exactKeys(obj, ['status', 'tasks', 'kinds', 'submissions'], where);
    const kinds = asRecord(obj.kinds, `${where}.kinds`);
    for (const [kind, count] of Object.entries(kinds)) {
        if (typeof count !== 'number')
            fail(where, `kind count '${kind}' must be a number`);
    }
    return {
        status: str(obj, 'status', where),
        tasks: num(obj, 'tasks', where),
        kinds: kinds,
        submissions: num(obj, 'submissions', where),
    };
}
export function parseExportReply(value) {
    const where = 'export reply';
    const obj = asRecord(value, where);
    exactKeys(obj, ['kind', 'rows'], where);
    const rows = obj.rows;
    if (!Array.isArray(rows))
        fail(where, "'rows' must be an array");
    return {
        kind: str(obj, 'kind', where),
        rows: rows.map((row, i) => asRecord(row, `${where}.rows[${i}]`)),
    };
}
