/** Drives one rating session: the server cursor is the source of truth.
 *
 * Each loop iteration fetches the current trial, hands it to the presenter
 * (which enforces playback before it can resolve with a rating), submits
 * the rating, and advances. A 409 from the server means our local view
 * drifted (another tab, a replayed submission): we refetch and continue.
 * Network failures surface through the presenter's retry hook without
 * losing local state.
 */

import { ApiClient, ConflictError, NetworkError, Trial } from './api.js';
import { AudioFactory, TrialPlayback } from './player.js';

export interface TrialPresenter {
    /** Show a trial; resolve with the chosen rating (1..5) once allowed. */
    presentTrial(trial: Trial, playback: TrialPlayback): Promise<number>;
    showDone(): void;
    /** Surface a retryable failure; resolve when the user asks to retry. */
    askRetry(message: string): Promise<void>;
}

export class SessionController {
    constructor(
        private readonly api: ApiClient,
        private readonly sessionId: string,
        private readonly presenter: TrialPresenter,
        private readonly createAudio: AudioFactory,
    ) {}

    async run(): Promise<void> {
        for (;;) {
            let trial: Trial | null;
            try {
                trial = await this.api.nextTrial(this.sessionId);
            } catch (err) {
                if (err instanceof NetworkError) {
                    await this.presenter.askRetry(err.message);
                    continue;
                }
                throw err;
            }
            if (trial === null) {
                this.presenter.showDone();
                return;
            }
            const playback = new TrialPlayback(
                this.createAudio,
                trial.reference_url,
                trial.test_url,
            );
            const rating = await this.presenter.presentTrial(trial, playback);
            await this.submitWithRecovery(trial, rating);
        }
    }

    private async submitWithRecovery(trial: Trial, rating: number): Promise<void> {
        for (;;) {
            try {
                await this.api.submitRating(this.sessionId, trial.trial_index, rating);
                return;
            } catch (err) {
                if (err instanceof ConflictError) {
                    // server cursor moved past this trial; resynchronize
                    return;
                }
                if (err instanceof NetworkError) {
                    await this.presenter.askRetry(err.message);
                    continue;
                }
                throw err;
            }
        }
    }
}
