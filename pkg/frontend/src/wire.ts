// Wire protocol types and builders. Every outbound message must conform
// to ../../src/expressive_flow/schemas/wire.schema.json; the schema test
// validates these builders against that file.

export const EMOTIONS = ["happy", "sad", "angry", "fear", "bored", "curious", "calm"] as const;
export type Emotion = (typeof EMOTIONS)[number];
export type Mode = "log" | "infer";

export interface HelloMsg {
  type: "hello";
  seq: number;
  t_ms: number;
  mode: Mode;
  emotion: Emotion;
  model?: string;
  clip?: string;
  seed?: number;
  H?: number;
}

export interface ObsMsg {
  type: "obs";
  seq: number;
  t_ms: number;
  head: number[];
  hand_l: number[];
  hand_r: number[];
  face: number[];
  target: number[];
}

export interface RecordMarkMsg {
  type: "record_mark";
  seq: number;
  t_ms: number;
}

export interface SetEmotionMsg {
  type: "set_emotion";
  seq: number;
  t_ms: number;
  emotion: Emotion;
}

export interface ActMsg {
  type: "act";
  seq: number;
  t_ms: number;
  head: number[];
  hand_l: number[];
  hand_r: number[];
  face: number[];
}

export interface StatusMsg {
  type: "status";
  seq: number;
  t_ms: number;
  frames: number;
  marked: number;
}

export interface ErrorMsg {
  type: "error";
  seq: number;
  t_ms: number;
  code: "SEQ_ORDER" | "BAD_SCHEMA" | "NO_MODEL";
  detail: string;
}

export type ServerMsg = ActMsg | StatusMsg | ErrorMsg;
export type ClientMsg = HelloMsg | ObsMsg | RecordMarkMsg | SetEmotionMsg;

/** Builds outbound messages with the monotonic per-direction sequence. */
export class MessageFactory {
  private seq = -1;

  constructor(private readonly now: () => number = () => Date.now()) {}

  private base(): { seq: number; t_ms: number } {
    this.seq += 1;
    return { seq: this.seq, t_ms: this.now() };
  }

  hello(mode: Mode, emotion: Emotion, extra: Partial<Pick<HelloMsg, "model" | "clip" | "seed" | "H">> = {}): HelloMsg {
    const msg: HelloMsg = { type: "hello", ...this.base(), mode, emotion };
    if (extra.model !== undefined) msg.model = extra.model;
    if (extra.clip !== undefined) msg.clip = extra.clip;
    if (extra.seed !== undefined) msg.seed = extra.seed;
    if (extra.H !== undefined) msg.H = extra.H;
    return msg;
  }

  obs(head: number[], handL: number[], handR: number[], face: number[], target: number[]): ObsMsg {
    return {
      type: "obs",
      ...this.base(),
      head: [...head],
      hand_l: [...handL],
      hand_r: [...handR],
      face: [...face],
      target: [...target],
    };
  }

  recordMark(): RecordMarkMsg {
    return { type: "record_mark", ...this.base() };
  }

  setEmotion(emotion: Emotion): SetEmotionMsg {
    return { type: "set_emotion", ...this.base(), emotion };
  }
}

export function parseServerMsg(text: string): ServerMsg | null {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const type = (obj as { type?: string }).type;
  if (type === "act" || type === "status" || type === "error") return obj as ServerMsg;
  return null;
}
