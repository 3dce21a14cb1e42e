/** DOM presenter for DCR trials.
 *
 * The payloads this UI consumes carry no model or gold information, and
 * nothing here adds any: listeners see only "Reference" and "Test" plus
 * the five scale anchors.
 */

import { Trial } from './api.js';
import { PlaybackPhase, TrialPlayback } from './player.js';
import { TrialPresenter } from './session.js';

/** Five-point DCR scale, rendered top to bottom. */
export const RATING_SCALE: ReadonlyArray<[number, string]> = [
    [5, 'degradation is inaudible'],
    [4, 'degradation is audible but not annoying'],
    [3, 'degradation is slightly annoying'],
    [2, 'degradation is annoying'],
    [1, 'degradation is very annoying'],
];

const PHASE_TEXT: Record<PlaybackPhase, string> = {
    'idle': 'Press play to hear the reference, then the test version.',
    'playing-reference': 'Playing: reference',
    'reference-done': 'Reference finished.',
    'playing-test': 'Playing: test version',
    'complete': 'Both clips played. Please rate the degradation.',
};

export class DomPresenter implements TrialPresenter {
    private readonly status: HTMLParagraphElement;
    private readonly progress: HTMLParagraphElement;
    private readonly playButton: HTMLButtonElement;
    private readonly replayReference: HTMLButtonElement;
    private readonly replayTest: HTMLButtonElement;
    private readonly form: HTMLFormElement;
    private readonly radios: HTMLInputElement[] = [];
    private readonly submit: HTMLButtonElement;
    private readonly retryBox: HTMLDivElement;
    private readonly retryButton: HTMLButtonElement;
    private readonly retryMessage: HTMLParagraphElement;

    constructor(private readonly root: HTMLElement, private readonly trialTotal: number) {
        root.replaceChildren();
        this.progress = document.createElement('p');
        this.progress.className = 'progress';
        this.status = document.createElement('p');
        this.status.className = 'status';

        this.playButton = document.createElement('button');
        this.playButton.textContent = 'Play';
        this.replayReference = document.createElement('button');
        this.replayReference.textContent = 'Replay reference';
        this.replayTest = document.createElement('button');
        this.replayTest.textContent = 'Replay test';

        this.form = document.createElement('form');
        for (const [value, label] of RATING_SCALE) {
            const row = document.createElement('label');
            row.className = 'scale-option';
            const radio = document.createElement('input');
            radio.type = 'radio';
            radio.name = 'rating';
            radio.value = String(value);
            radio.disabled = true;
            row.append(radio, ` ${value} — ${label}`);
            this.form.append(row);
            this.radios.push(radio);
        }
        this.submit = document.createElement('button');
        this.submit.type = 'submit';
        this.submit.textContent = 'Submit rating';
        this.submit.disabled = true;
        this.form.append(this.submit);

        this.retryBox = document.createElement('div');
        this.retryBox.className = 'retry';
        this.retryBox.hidden = true;
        this.retryMessage = document.createElement('p');
        this.retryButton = document.createElement('button');
        this.retryButton.textContent = 'Retry';
        this.retryBox.append(this.retryMessage, this.retryButton);

        root.append(
            this.progress, this.status, this.playButton,
            this.replayReference, this.replayTest, this.form, this.retryBox,
        );
    }

    presentTrial(trial: Trial, playback: TrialPlayback): Promise<number> {
        this.progress.textContent =
            `Trial ${trial.trial_index + 1} of ${this.trialTotal}`;
        this.setRatingEnabled(false);
        this.playButton.disabled = false;
        this.replayReference.hidden = true;
        this.replayTest.hidden = true;
        this.status.textContent = PHASE_TEXT['idle'];
        for (const radio of this.radios) {
            radio.checked = false;
        }

        playback.onPhaseChange = (phase) => {
            this.status.textContent = PHASE_TEXT[phase];
            if (phase === 'complete') {
                this.setRatingEnabled(true);
                this.replayReference.hidden = false;
                this.replayTest.hidden = false;
            }
        };
        this.playButton.onclick = (event) => {
            event.preventDefault();
            this.playButton.disabled = true;
            void playback.start();
        };
        this.replayReference.onclick = (event) => {
            event.preventDefault();
            void playback.replay('reference');
        };
        this.replayTest.onclick = (event) => {
            event.preventDefault();
            void playback.replay('test');
        };

        return new Promise((resolve) => {
            this.form.onsubmit = (event) => {
                event.preventDefault();
                if (!playback.ratingUnlocked) {
                    return; // locked until both clips finished
                }
                const chosen = this.radios.find((radio) => radio.checked);
                if (!chosen) {
                    return;
                }
                this.setRatingEnabled(false);
                resolve(Number(chosen.value));
            };
        });
    }

    showDone(): void {
        this.root.replaceChildren();
        const done = document.createElement('h2');
        done.textContent = 'Session complete — thank you for listening!';
        this.root.append(done);
    }

    askRetry(message: string): Promise<void> {
        this.retryMessage.textContent =
            `Connection problem (${message}). Your progress is saved.`;
        this.retryBox.hidden = false;
        return new Promise((resolve) => {
            this.retryButton.onclick = (event) => {
                event.preventDefault();
                this.retryBox.hidden = true;
                resolve();
            };
        });
    }

    private setRatingEnabled(enabled: boolean): void {
        for (const radio of this.radios) {
            radio.disabled = !enabled;
        }
        this.submit.disabled = !enabled;
    }
}
