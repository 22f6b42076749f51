/** Interval polling that provably stops on terminal states. */

import { TERMINAL_STATES } from './types.js';

export interface PollHandle<T> {
  readonly done: Promise<T>;
  stop(): void;
  isActive(): boolean;
}

/**
 * Poll `fetchState` every `intervalMs` until the record reaches done or
 * failed, invoking `onUpdate` for every snapshot. At most one request is
 * in flight at a time; the timer is cleared on the terminal snapshot, on
 * stop(), and on fetch errors (no orphan timers).
 */
export function pollUntilTerminal<T extends { state: string }>(
  fetchState: () => Promise<T>,
  onUpdate: (snapshot: T) => void,
  intervalMs = 1000,
): PollHandle<T> {
  let timer: ReturnType<typeof setInterval> | null = null;
  let inFlight = false;
  let settled = false;

  let resolveDone!: (value: T) => void;
  let rejectDone!: (err: unknown) => void;
  const done = new Promise<T>((resolve, reject) => {
    resolveDone = resolve;
    rejectDone = reject;
  });
  // the first tick fires before callers can attach handlers; keep an
  // internal handler so an immediate failure is never an unhandled rejection
  done.catch(() => undefined);

  const clear = () => {
    if (timer !== null) {
      clearInterval(timer);
      timer = null;
    }
  };

  const tick = async () => {
    if (inFlight || settled) return;
    inFlight = true;
    try {
      const snapshot = await fetchState();
      onUpdate(snapshot);
      if ((TERMINAL_STATES as readonly string[]).includes(snapshot.state)) {
        settled = true;
        clear();
        resolveDone(snapshot);
      }
    } catch (err) {
      settled = true;
      clear();
      rejectDone(err);
    } finally {
      inFlight = false;
    }
  };

  timer = setInterval(tick, intervalMs);
  void tick();

  return {
    done,
    stop() {
      settled = true;
      clear();
    },
    isActive() {
      return timer !== null;
    },
  };
}
