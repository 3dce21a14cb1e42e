/** In-memory stand-in for the study service, faithful to its HTTP contract:
 * sequential trial cursor, 409 on out-of-order or duplicate submissions,
 * 422 on out-of-scale ratings, CSV export with one row per accepted rating.
 * It also counts every 409 it serves, so tests can assert an honest client
 * never triggers one.
 */

import type { FetchLike } from '../src/api.js';

interface StoredRating {
    stimulusId: string;
    trialIndex: number;
    rating: number;
}

export interface MockOptions {
    trialCount: number;
    /** fail the first N network calls to exercise retry paths */
    failFirst?: number;
}

export class MockService {
    readonly sessionId = 'session-1';
    conflictCount = 0;
    cursor = 0;
    ratings: StoredRating[] = [];
    private remainingFailures: number;
    private readonly trials: string[];

    constructor(private readonly options: MockOptions) {
        this.remainingFailures = options.failFirst ?? 0;
        this.trials = Array.from(
            { length: options.trialCount },
            (_, i) => `stim-${i}`,
        );
    }

    exportCsv(): string {
        const lines = [
            'stimulus_id,model_label,model_type,participant_id,rating,timestamp,group_id',
        ];
        for (const row of this.ratings) {
            lines.push(
                `${row.stimulusId},X,discriminative,p0,${row.rating},t,0`,
            );
        }
        return lines.join('\n') + '\n';
    }

    fetch: FetchLike = async (url, init) => {
        if (this.remainingFailures > 0) {
            this.remainingFailures -= 1;
            throw new TypeError('network unreachable');
        }
        const method = init?.method ?? 'GET';
        const next = url.match(/\/sessions\/([^/]+)\/next$/);
        if (next && method === 'GET') {
            if (next[1] !== this.sessionId) {
                return new Response('not found', { status: 404 });
            }
            if (this.cursor >= this.trials.length) {
                return new Response(null, { status: 204 });
            }
            return Response.json({
                trial_index: this.cursor,
                reference_url: `/audio/ref-${this.cursor}.wav`,
                test_url: `/audio/test-${this.cursor}.wav`,
                is_last: this.cursor === this.trials.length - 1,
            });
        }
        const ratings = url.match(/\/sessions\/([^/]+)\/ratings$/);
        if (ratings && method === 'POST') {
            if (ratings[1] !== this.sessionId) {
                return new Response('not found', { status: 404 });
            }
            const body = JSON.parse(String(init?.body));
            if (
                typeof body.rating !== 'number' ||
                body.rating < 1 || body.rating > 5
            ) {
                return new Response('rating out of scale', { status: 422 });
            }
            if (body.trial_index !== this.cursor) {
                this.conflictCount += 1;
                return new Response('sequencing violation', { status: 409 });
            }
            this.ratings.push({
                stimulusId: this.trials[this.cursor],
                trialIndex: body.trial_index,
                rating: body.rating,
            });
            this.cursor += 1;
            return Response.json({ accepted: true }, { status: 201 });
        }
        return new Response('no route', { status: 404 });
    };
}
