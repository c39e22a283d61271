/**
 * Browser entry point: load the JSON config, open a session against the
 * annotation service, and wire rendering plus the 1/2/3 keyboard shortcuts.
 *
 * The page is served as static assets by the service itself, so the default
 * service URL is the page's own origin. Deployments drop a config.json next
 * to index.html ({"service_url": "", "annotator": "...", "token": null});
 * without one the session runs unauthenticated as "anonymous".
 */
import { AnnotationClient } from './client.js';
import { AnnotationSession } from './controller.js';
import { render } from './render.js';
const DEFAULT_CONFIG = { service_url: '', annotator: 'anonymous', token: null };
/** Read config.json from the static root; a missing file means defaults. */
export async function loadConfig(fetchImpl) {
    let response;
    try {
        response = await fetchImpl('config.json');
    }
    catch {
        return DEFAULT_CONFIG;
    }
    if (response.status === 404)
        return DEFAULT_CONFIG;
    if (!response.ok)
        throw new Error(`config.json: HTTP ${response.status}`);
    const raw = await response.json();
    if (typeof raw !== 'object' || raw === null) {
        throw new Error('config.json must hold an object');
    }
    const config = { ...DEFAULT_CONFIG, ...raw };
    if (typeof config.annotator !== 'string' || !config.annotator) {
        throw new Error('config.json: "annotator" must be a nonempty string');
    }
    return config;
}
export async function bootstrap(root) {
    const config = await loadConfig(globalThis.fetch.bind(globalThis));
    const client = new AnnotationClient({
        serviceUrl: config.service_url,
        token: config.token,
    });
    const session = new AnnotationSession(client, config.annotator, (state) => render(root, state, {
        onChoose: (label) => session.choose(label),
        onDecideFact: (i, decision, category) => session.decideFact(i, decision, category),
        onSubmitReview: () => session.submitReview(),
        onRetry: () => session.retry(),
    }));
    window.addEventListener('keydown', (event) => {
        if (event.altKey || event.ctrlKey || event.metaKey)
            return;
        if (session.handleKey(event.key))
            event.preventDefault();
    });
    await session.start();
}
const root = typeof document === 'undefined' ? null : document.getElementById('app');
if (root) {
    void bootstrap(root).catch((error) => {
        root.textContent = `Cannot start the annotation UI: ${String(error)}`;
    });
}
