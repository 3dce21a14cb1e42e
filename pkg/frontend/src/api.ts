/** Typed client for the study-service HTTP API. */

export interface Trial {
    trial_index: number;
    reference_url: string;
    test_url: string;
    is_last: boolean;
}

export interface SessionInfo {
    session_id: string;
    group_id: number;
    trial_count: number;
}

/** Thrown on HTTP 409: the server disagrees about the current trial. */
export class ConflictError extends Error {}

/** Thrown on connectivity problems and 5xx responses; safe to retry. */
export class NetworkError extends Error {}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
    constructor(
        private readonly baseUrl: string = '',
        private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
    ) {}

    private async request(path: string, init?: RequestInit): Promise<Response> {
        let response: Response;
        try {
            response = await this.fetchImpl(this.baseUrl + path, init);
        } catch (err) {
            throw new NetworkError(String(err));
        }
        if (response.status >= 500) {
            throw new NetworkError(`server error ${response.status}`);
        }
        return response;
    }

    async createSession(studyId: string, participantId: string): Promise<SessionInfo> {
        const response = await this.request(`/studies/${studyId}/sessions`, {
            method: 'POST',
            headers: { 'content-type': 'application/json' },
            body: JSON.stringify({ participant_id: participantId }),
        });
        if (!response.ok) {
            throw new Error(`cannot create session: ${response.status}`);
        }
        return response.json();
    }

    /** Returns the current trial, or null when the session is complete. */
    async nextTrial(sessionId: string): Promise<Trial | null> {
        const response = await this.request(`/sessions/${sessionId}/next`);
        if (response.status === 204) {
            return null;
        }
        if (!response.ok) {
            throw new Error(`cannot fetch trial: ${response.status}`);
        }
        return response.json();
    }

    async submitRating(sessionId: string, trialIndex: number, rating: number): Promise<void> {
        const response = await this.request(`/sessions/${sessionId}/ratings`, {
            method: 'POST',
            headers: { 'content-type': 'application/json' },
            body: JSON.stringify({ trial_index: trialIndex, rating }),
        });
        if (response.status === 409) {
            throw new ConflictError('trial already rated or out of order');
        }
        if (!response.ok) {
            throw new Error(`rating rejected: ${response.status}`);
        }
    }
}
