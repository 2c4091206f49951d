// End-to-end against the real Python back end: a scripted headless
// demonstrate session must land its frames in a server-side clip, and a
// perform session must drive the avatar from returned acts.

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { createInterface } from "node:readline";
import WebSocket from "ws";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { StudioSession, Transport } from "../src/session.js";

const PY = process.env.PYTHON ?? "python3";

function wsTransport(url: string): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(url);
    const transport: Transport = {
      send: (text) => ws.send(text),
      close: () => ws.close(),
      onmessage: null,
      onclose: null,
    };
    ws.on("message", (data) => transport.onmessage?.(data.toString()));
    ws.on("close", () => transport.onclose?.());
    ws.on("open", () => resolve(transport));
    ws.on("error", reject);
  });
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

describe("against the python server", () => {
  let proc: ChildProcess;
  let port = 0;
  let dataDir: string;
  let modelsDir: string;

  beforeAll(async () => {
    const root = mkdtempSync(join(tmpdir(), "studio-it-"));
    dataDir = join(root, "data");
    modelsDir = join(root, "models");
    // a tiny untrained artifact is enough to exercise the infer protocol
    const gen = spawnSync(PY, ["-c", [
      "from pathlib import Path",
      "from expressive_flow.flowgen import ModelConfig, ModelParams",
      `p = Path(${JSON.stringify(modelsDir)})`,
      "p.mkdir(parents=True)",
      "cfg = ModelConfig(action_dim=25, horizon=4, n_classes=7, history=1, obs_dim=27, widths=(8, 16))",
      "ModelParams.init(cfg, seed=0).save(p / 'stub.npz')",
    ].join("\n")], { encoding: "utf-8" });
    expect(gen.status, gen.stderr).toBe(0);

    proc = spawn(PY, ["-m", "expressive_flow.cli", "serve", "--port", "0",
                      "--models-dir", modelsDir, "--data-dir", dataDir]);
    port = await new Promise<number>((resolve, reject) => {
      const rl = createInterface({ input: proc.stdout! });
      rl.on("line", (line) => {
        const m = line.match(/ws:\/\/[\d.]+:(\d+)/);
        if (m) resolve(parseInt(m[1], 10));
      });
      proc.on("exit", (code) => reject(new Error(`server exited early: ${code}`)));
      setTimeout(() => reject(new Error("server did not announce a port")), 15000);
    });
  }, 30000);

  afterAll(() => {
    proc?.kill();
  });

  it("demonstrate session: clip frame count matches sent count", async () => {
    const transport = await wsTransport(`ws://127.0.0.1:${port}`);
    const session = new StudioSession(transport, {
      mode: "demonstrate", emotion: "curious", clip: "headless.jsonl",
    });
    for (let i = 0; i < 30; i++) {
      session.state.controls.sliders.cEye = i / 30;
      session.tick();
      await sleep(5);
    }
    session.recordMark();
    await sleep(200);
    expect(session.lastStatus?.frames).toBe(30);
    expect(session.lastStatus?.marked).toBe(1);
    session.close();
    await sleep(300);

    const lines = readFileSync(join(dataDir, "headless.jsonl"), "utf-8")
      .trim().split("\n");
    expect(lines.length).toBe(1 + session.sent); // header + one line per obs
    const header = JSON.parse(lines[0]);
    expect(header.schema).toBe("expressive-flow/clip/v1");
    expect(header.emotion).toBe("curious");
    const last = JSON.parse(lines.at(-1)!);
    // the final frame carries the retargeted slider state and the mark
    expect(last.face[4]).toBeCloseTo(1 - 0.9 * (29 / 30), 9);
    expect(last.mark).toBe(true);
  }, 20000);

  it("perform session: acts come back and land on the avatar", async () => {
    const transport = await wsTransport(`ws://127.0.0.1:${port}`);
    const session = new StudioSession(transport, {
      mode: "perform", emotion: "fear", model: "stub", seed: 4,
    });
    session.dragTarget(0.2, 0.5, 0.1);
    for (let i = 0; i < 8; i++) {
      session.tick();
      await sleep(60);
    }
    expect(session.actsApplied).toBeGreaterThanOrEqual(7); // H=1: every obs answers
    // the avatar mirrors the last act, which the zero-velocity stub draws
    // from denormalized noise, not the neutral pose we started with
    expect(session.state.avatar.face).not.toEqual([0, 0, 0, 0, 1, 0, 0]);
    session.setEmotion("happy");
    session.tick();
    await sleep(100);
    session.close();
  }, 20000);

  it("surfaces server errors", async () => {
    const transport = await wsTransport(`ws://127.0.0.1:${port}`);
    const errors: string[] = [];
    const session = new StudioSession(transport, {
      mode: "perform", emotion: "fear", model: "no_such_model",
    });
    session.onerror = (code) => errors.push(code);
    await sleep(300);
    expect(errors).toEqual(["NO_MODEL"]);
    expect(session.state.connection).toBe("error");
    session.close();
  }, 10000);
});
