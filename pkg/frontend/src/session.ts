// The studio session: one WebSocket, a 10 Hz send tick, and the state
// machine connecting operator controls, the wire protocol, and the
// rendered avatar. Transport and clock are injected so the whole loop
// runs headless in tests.

import { poseFromVec6, Vec6 } from "./pose.js";
import { FaceDofs } from "./retarget.js";
import {
  avatarObsArrays,
  initialState,
  retargetControls,
  StudioMode,
  StudioState,
} from "./state.js";
import { Emotion, MessageFactory, parseServerMsg, ServerMsg } from "./wire.js";

export const TICK_MS = 100; // 10 Hz

/** Minimal WebSocket-shaped transport so tests can inject fakes. */
export interface Transport {
  send(text: string): void;
  close(): void;
  onmessage: ((text: string) => void) | null;
  onclose: (() => void) | null;
}

export interface SessionOptions {
  mode: StudioMode;
  emotion: Emotion;
  model?: string;
  clip?: string;
  seed?: number;
  now?: () => number;
}

export class StudioSession {
  readonly state: StudioState;
  private readonly factory: MessageFactory;
  private readonly transport: Transport;
  private flashUntil = 0;
  private readonly now: () => number;
  onerror: ((code: string, detail: string) => void) | null = null;
  sent = 0;
  actsApplied = 0;
  lastStatus: { frames: number; marked: number } | null = null;

  constructor(transport: Transport, opts: SessionOptions) {
    this.transport = transport;
    this.now = opts.now ?? (() => Date.now());
    this.factory = new MessageFactory(this.now);
    this.state = initialState(opts.mode, opts.emotion);
    this.state.connection = "open";
    transport.onmessage = (text) => this.handleMessage(text);
    transport.onclose = () => {
      // freeze the avatar, surface the banner state, stop sending;
      // an error state set just before the server closed wins
      if (this.state.connection !== "error") {
        this.state.connection = "closed";
      }
      this.state.recording = false;
    };
    this.transport.send(JSON.stringify(this.factory.hello(
      opts.mode === "demonstrate" ? "log" : "infer",
      opts.emotion,
      { model: opts.model, clip: opts.clip, seed: opts.seed },
    )));
  }

  get connected(): boolean {
    return this.state.connection === "open";
  }

  /** One 10 Hz tick: refresh the avatar from the controls (demonstrate)
   * and stream the current observation. */
  tick(): void {
    if (!this.connected) return;
    if (this.state.mode === "demonstrate") {
      // operator controls -> retarget equations -> avatar command frame
      const mapped = retargetControls(this.state);
      this.state.avatar = mapped;
    }
    const arrays = avatarObsArrays(this.state.avatar, this.state.target);
    this.transport.send(JSON.stringify(this.factory.obs(
      arrays.head, arrays.hand_l, arrays.hand_r, arrays.face, arrays.target)));
    this.sent += 1;
    if (this.state.borderFlash && this.now() > this.flashUntil) {
      this.state.borderFlash = false;
    }
  }

  /** Record trigger: flag the just-streamed frame; the border flashes red. */
  recordMark(): void {
    if (!this.connected || this.state.mode !== "demonstrate") return;
    this.transport.send(JSON.stringify(this.factory.recordMark()));
    this.state.recording = true;
    this.state.borderFlash = true;
    this.flashUntil = this.now() + 400;
  }

  /** Perform mode steering: pick one of the seven emotions. */
  setEmotion(emotion: Emotion): void {
    this.state.emotion = emotion;
    if (this.connected && this.state.mode === "perform") {
      this.transport.send(JSON.stringify(this.factory.setEmotion(emotion)));
    }
  }

  dragTarget(x: number, y: number, z: number): void {
    this.state.target = [x, y, z];
  }

  close(): void {
    this.transport.close();
    this.state.connection = "closed";
  }

  private handleMessage(text: string): void {
    const msg = parseServerMsg(text);
    if (msg === null) return;
    this.apply(msg);
  }

  /** Server messages mutate the studio state immediately, so an `act`
   * lands on the avatar within the next render tick. */
  private apply(msg: ServerMsg): void {
    switch (msg.type) {
      case "act":
        this.state.avatar = {
          head: poseFromVec6(msg.head as Vec6),
          handLeft: poseFromVec6(msg.hand_l as Vec6),
          handRight: poseFromVec6(msg.hand_r as Vec6),
          face: [...msg.face] as FaceDofs,
        };
        this.actsApplied += 1;
        break;
      case "status":
        this.lastStatus = { frames: msg.frames, marked: msg.marked };
        break;
      case "error":
        if (this.onerror) this.onerror(msg.code, msg.detail);
        if (msg.code !== "SEQ_ORDER") this.state.connection = "error";
        break;
    }
  }
}

/** Drive a session at the 10 Hz cadence with injectable timer functions. */
export class TickLoop {
  private handle: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly session: StudioSession,
    private readonly intervalMs: number = TICK_MS,
  ) {}

  start(): void {
    if (this.handle !== null) return;
    this.handle = setInterval(() => {
      if (this.session.connected) {
        this.session.tick();
      } else {
        this.stop();
      }
    }, this.intervalMs);
  }

  stop(): void {
    if (this.handle !== null) {
      clearInterval(this.handle);
      this.handle = null;
    }
  }
}
