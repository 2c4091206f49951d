// Browser entry point: DOM controls + WebSocket transport + avatar.

import { AvatarScene } from "./avatar.js";
import { pose } from "./pose.js";
import { StudioSession, TickLoop, Transport } from "./session.js";
import { REST_LEFT, REST_RIGHT, StudioMode } from "./state.js";
import { Emotion, EMOTIONS } from "./wire.js";

function webSocketTransport(url: string, onOpen: () => void, onFail: (err: string) => void): Transport {
  const ws = new WebSocket(url);
  const transport: Transport = {
    send: (text) => ws.readyState === WebSocket.OPEN && ws.send(text),
    close: () => ws.close(),
    onmessage: null,
    onclose: null,
  };
  ws.onmessage = (ev) => transport.onmessage?.(String(ev.data));
  ws.onclose = () => transport.onclose?.();
  ws.onerror = () => onFail("connection error");
  ws.onopen = onOpen;
  return transport;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("scene");
const banner = el<HTMLDivElement>("banner");
const frame = el<HTMLDivElement>("frame");
const emotionBar = el<HTMLDivElement>("emotions");
const status = el<HTMLDivElement>("status");

let session: StudioSession | null = null;
let loop: TickLoop | null = null;
const avatar = new AvatarScene(canvas);

const sliderIds = ["cEye", "dLip", "hBrow", "hChin", "thetaX", "thetaY"] as const;

function currentSliders() {
  const read = (id: string) => parseFloat(el<HTMLInputElement>(id).value);
  return {
    cEye: read("cEye"), dLip: read("dLip"), hBrow: read("hBrow"), hChin: read("hChin"),
    thetaX: read("thetaX"), thetaY: read("thetaY"),
  };
}

function applyControls() {
  if (!session) return;
  const s = session.state;
  s.controls.sliders = currentSliders();
  const yaw = parseFloat(el<HTMLInputElement>("headYaw").value);
  const pitch = parseFloat(el<HTMLInputElement>("headPitch").value);
  s.controls.head = pose([0, 0, 0], [pitch, 0, yaw]);
  const reach = parseFloat(el<HTMLInputElement>("reach").value);
  s.controls.controllerLeft = pose([REST_LEFT[0], REST_LEFT[1] + reach, REST_LEFT[2]]);
  s.controls.controllerRight = pose([REST_RIGHT[0], REST_RIGHT[1] + reach, REST_RIGHT[2]]);
  s.target = [
    parseFloat(el<HTMLInputElement>("targetX").value),
    parseFloat(el<HTMLInputElement>("targetY").value),
    parseFloat(el<HTMLInputElement>("targetZ").value),
  ];
}

async function refreshModels() {
  // the model list comes from the server's status document
  const wsUrl = el<HTMLInputElement>("server").value.trim();
  const httpUrl = wsUrl.replace(/^ws/, "http") + "/status";
  try {
    const doc = await (await fetch(httpUrl)).json();
    const list = el<HTMLDataListElement>("models");
    list.replaceChildren();
    for (const id of doc.models ?? []) {
      const opt = document.createElement("option");
      opt.value = id;
      list.appendChild(opt);
    }
    if (doc.models?.length && !el<HTMLInputElement>("model").value) {
      el<HTMLInputElement>("model").value = doc.models[0];
    }
    status.textContent = `models: ${(doc.models ?? []).join(", ") || "none"}`;
  } catch {
    status.textContent = "status endpoint unreachable";
  }
}

function connect() {
  const mode = el<HTMLSelectElement>("mode").value as StudioMode;
  const emotion = el<HTMLSelectElement>("emotion").value as Emotion;
  const model = el<HTMLInputElement>("model").value.trim();
  const url = el<HTMLInputElement>("server").value.trim();
  banner.textContent = "connecting...";
  const transport = webSocketTransport(
    url,
    () => {
      session = new StudioSession(transport, {
        mode,
        emotion,
        model: mode === "perform" ? model || undefined : undefined,
        clip: mode === "demonstrate" ? `studio_${Date.now()}.jsonl` : undefined,
      });
      session.onerror = (code, detail) => (banner.textContent = `server error ${code}: ${detail}`);
      loop = new TickLoop(session);
      loop.start();
      banner.textContent = `connected (${mode})`;
    },
    (err) => (banner.textContent = err),
  );
}

el<HTMLButtonElement>("connect").onclick = connect;
el<HTMLInputElement>("server").onchange = refreshModels;
refreshModels();
el<HTMLButtonElement>("disconnect").onclick = () => {
  loop?.stop();
  session?.close();
  banner.textContent = "disconnected";
};
el<HTMLButtonElement>("record").onclick = () => session?.recordMark();

for (const emotion of EMOTIONS) {
  const b = document.createElement("button");
  b.textContent = emotion;
  b.onclick = () => {
    session?.setEmotion(emotion);
    for (const other of Array.from(emotionBar.children)) other.classList.remove("active");
    b.classList.add("active");
  };
  emotionBar.appendChild(b);
}

for (const id of [...sliderIds, "headYaw", "headPitch", "reach", "targetX", "targetY", "targetZ"]) {
  el<HTMLInputElement>(id).oninput = applyControls;
}

function renderLoop() {
  requestAnimationFrame(renderLoop);
  if (session) {
    applyControls();
    frame.classList.toggle("flash", session.state.borderFlash);
    if (session.state.mode === "demonstrate" && session.connected) {
      // live local preview between network ticks
      const s = session.state;
      avatar.update(s.avatar, s.target);
    } else {
      avatar.update(session.state.avatar, session.state.target);
    }
    status.textContent =
      `${session.state.connection} | sent ${session.sent} | acts ${session.actsApplied}` +
      (session.lastStatus ? ` | logged ${session.lastStatus.frames} (${session.lastStatus.marked} marked)` : "");
  }
  avatar.render();
}
renderLoop();
