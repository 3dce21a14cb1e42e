/** Sequential playback enforcement: reference fully, then test fully.
 *
 * Rating must stay locked until both clips have played to completion once,
 * with the reference always first. Replays are allowed afterwards (and
 * counted, for later sensitivity analysis); seeking is never offered
 * during the first pass.
 */

export interface AudioHandle {
    play(): Promise<void>;
    stop(): void;
    onEnded(callback: () => void): void;
}

export type AudioFactory = (url: string) => AudioHandle;

export type PlaybackPhase =
    | 'idle'
    | 'playing-reference'
    | 'reference-done'
    | 'playing-test'
    | 'complete';

export class TrialPlayback {
    private phase: PlaybackPhase = 'idle';
    private reference: AudioHandle;
    private test: AudioHandle;
    replays = 0;
    onPhaseChange: (phase: PlaybackPhase) => void = () => {};

    constructor(
        createAudio: AudioFactory,
        referenceUrl: string,
        testUrl: string,
    ) {
        this.reference = createAudio(referenceUrl);
        this.test = createAudio(testUrl);
        this.reference.onEnded(() => this.referenceEnded());
        this.test.onEnded(() => this.testEnded());
    }

    get currentPhase(): PlaybackPhase {
        return this.phase;
    }

    /** Both clips have completed at least once; rating may be enabled. */
    get ratingUnlocked(): boolean {
        return this.phase === 'complete';
    }

    /** Start the mandatory reference-then-test sequence. */
    async start(): Promise<void> {
        if (this.phase !== 'idle') {
            return;
        }
        this.setPhase('playing-reference');
        await this.reference.play();
    }

    /** Replay one clip after the mandatory pass (logged, never required). */
    async replay(which: 'reference' | 'test'): Promise<void> {
        if (!this.ratingUnlocked) {
            return;
        }
        this.replays += 1;
        await (which === 'reference' ? this.reference : this.test).play();
    }

    private referenceEnded(): void {
        if (this.phase === 'playing-reference') {
            this.setPhase('reference-done');
            this.setPhase('playing-test');
            void this.test.play();
        }
    }

    private testEnded(): void {
        if (this.phase === 'playing-test') {
            this.setPhase('complete');
        }
    }

    private setPhase(phase: PlaybackPhase): void {
        this.phase = phase;
        this.onPhaseChange(phase);
    }
}

/** Browser implementation over HTMLAudioElement. */
export function htmlAudioFactory(url: string): AudioHandle {
    const element = new Audio(url);
    element.preload = 'auto';
    // no scrubbing UI is ever attached; playback is start-to-end
    return {
        play: async () => {
            element.currentTime = 0;
            await element.play();
        },
        stop: () => element.pause(),
        onEnded: (callback) => element.addEventListener('ended', callback),
    };
}
