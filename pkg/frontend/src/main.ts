/** Entry point: reads study/participant from the query string, creates or
 * resumes a session, and runs it. The session id is kept in
 * sessionStorage so a reload resumes at the server cursor. */

import { ApiClient } from './api.js';
import { htmlAudioFactory } from './player.js';
import { SessionController } from './session.js';
import { DomPresenter } from './ui.js';

async function boot(): Promise<void> {
    const params = new URLSearchParams(window.location.search);
    const studyId = params.get('study');
    const participantId = params.get('participant');
    const root = document.getElementById('app');
    if (!root) {
        throw new Error('missing #app container');
    }
    if (!studyId || !participantId) {
        root.textContent = 'Open this page with ?study=<id>&participant=<id>.';
        return;
    }

    const api = new ApiClient('');
    const storageKey = `dcr-session:${studyId}:${participantId}`;
    let sessionId = window.sessionStorage.getItem(storageKey);
    let trialCount = Number(window.sessionStorage.getItem(`${storageKey}:n`));
    if (!sessionId) {
        const session = await api.createSession(studyId, participantId);
        sessionId = session.session_id;
        trialCount = session.trial_count;
        window.sessionStorage.setItem(storageKey, sessionId);
        window.sessionStorage.setItem(`${storageKey}:n`, String(trialCount));
    }

    const presenter = new DomPresenter(root, trialCount);
    const controller = new SessionController(
        api, sessionId, presenter, htmlAudioFactory,
    );
    await controller.run();
}

void boot();
