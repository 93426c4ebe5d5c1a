import { HallApi } from "./api.js";
import { OracleViewModel, type WallCard } from "./viewModel.js";
import { SessionDriver } from "./driver.js";
import type { DecodedFrame } from "./ppm.js";

const STORAGE_KEY = "hall.session";

function loadStoredId(): string | null {
  try {
    return localStorage.getItem(STORAGE_KEY);
  } catch {
    return null;
  }
}

function storeId(id: string): void {
  try {
    localStorage.setItem(STORAGE_KEY, id);
  } catch {
    // storage unavailable, resume just won't work
  }
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class CanvasPainter {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
  }

  draw(frame: DecodedFrame): void {
    if (this.canvas.width !== frame.width) this.canvas.width = frame.width;
    if (this.canvas.height !== frame.height) this.canvas.height = frame.height;
    this.ctx.putImageData(new ImageData(frame.rgba, frame.width, frame.height), 0, 0);
  }
}

interface AnimatedCard {
  painter: CanvasPainter;
  card: WallCard;
  startMs: number;
}

/** Loops every wall video on its own canvas from a single rAF driver. */
class WallAnimator {
  private cards: AnimatedCard[] = [];

  rebuild(container: HTMLElement, wall: WallCard[]): void {
    container.replaceChildren();
    this.cards = [];
    if (wall.length === 0) {
      for (let i = 0; i < 4; i++) {
        const ghost = document.createElement("div");
        ghost.className = "card placeholder";
        ghost.textContent = "No prophecy hangs here yet.";
        container.append(ghost);
      }
      return;
    }
    for (const card of wall) {
      const tile = document.createElement("div");
      tile.className = "card";
      if (card.video) {
        const canvas = document.createElement("canvas");
        tile.append(canvas);
        this.cards.push({
          painter: new CanvasPainter(canvas),
          card,
          startMs: performance.now(),
        });
      }
      const caption = document.createElement("p");
      caption.textContent = card.entry.prophecy_text;
      tile.append(caption);
      container.append(tile);
    }
  }

  tick(nowMs: number): void {
    for (const { painter, card, startMs } of this.cards) {
      const video = card.video!;
      const count = video.frames.length;
      if (count === 0) continue;
      const index = Math.floor(((nowMs - startMs) / 1000) * video.manifest.fps) % count;
      painter.draw(video.frames[index]!);
    }
  }
}

function main(): void {
  const askScreen = el<HTMLElement>("ask-screen");
  const waitScreen = el<HTMLElement>("wait-screen");
  const readyScreen = el<HTMLElement>("ready-screen");
  const viewScreen = el<HTMLElement>("view-screen");
  const questionBox = el<HTMLTextAreaElement>("question");
  const askButton = el<HTMLButtonElement>("ask");
  const askError = el<HTMLElement>("ask-error");
  const lastProphecy = el<HTMLElement>("last-prophecy");
  const failureNote = el<HTMLElement>("failure-note");
  const newSessionButton = el<HTMLButtonElement>("new-session");
  const countdown = el<HTMLElement>("countdown");
  const progressBar = el<HTMLProgressElement>("progress");
  const wallGrid = el<HTMLElement>("wall");
  const beholdButton = el<HTMLButtonElement>("behold");
  const stagePainter = new CanvasPainter(el<HTMLCanvasElement>("stage"));
  const wallAnimator = new WallAnimator();

  const api = new HallApi("");
  const model = new OracleViewModel();
  let renderedWall: WallCard[] | null = null;

  const render = (): void => {
    const phase = model.phase;
    askScreen.hidden = phase !== "medium_visible";
    waitScreen.hidden = phase !== "concealed";
    readyScreen.hidden = phase !== "prophecy_ready";
    viewScreen.hidden = phase !== "viewing_video";

    askButton.disabled = !model.canAsk();
    askError.hidden = model.askError === null;
    askError.textContent = model.askError ?? "";

    const dead = model.state === "completed" || model.state === "failed";
    newSessionButton.hidden = !dead;
    failureNote.hidden = model.failure === null;
    if (model.failure) {
      failureNote.textContent =
        `The oracle fell silent during ${model.failure.stage}: ${model.failure.reason}.`;
    }

    if (model.wall !== renderedWall) {
      renderedWall = model.wall;
      wallAnimator.rebuild(wallGrid, model.wall);
    }
  };

  const driver = new SessionDriver(api, model, {
    wallSize: 8,
    onSessionChange: storeId,
    onUpdate: render,
  });

  const report = (err: unknown): void => {
    model.askRejected(err instanceof Error ? err.message : String(err));
    render();
  };

  const settle = async (): Promise<void> => {
    await driver.pollUntilSettled();
  };

  askButton.addEventListener("click", () => {
    void driver
      .askFixtureText(questionBox.value)
      .then((sent) => (sent ? settle() : undefined))
      .catch(report);
  });

  beholdButton.addEventListener("click", () => {
    void driver
      .viewProphecy((frame) => stagePainter.draw(frame))
      .then((result) => {
        if (result) {
          lastProphecy.hidden = false;
          lastProphecy.textContent = `The oracle spoke: ${result.prophecyText}`;
          questionBox.value = "";
        }
      })
      .catch(report);
  });

  newSessionButton.addEventListener("click", () => {
    void driver.start(null).catch(report);
  });

  const tick = (): void => {
    if (model.phase === "concealed") {
      countdown.textContent = `${Math.ceil(model.displayEta(Date.now()))} s`;
      progressBar.value = model.progress;
      wallAnimator.tick(performance.now());
    }
    requestAnimationFrame(tick);
  };
  requestAnimationFrame(tick);

  driver
    .start(loadStoredId())
    .then(() => {
      if (model.phase === "concealed") return settle();
      return undefined;
    })
    .catch(report);
}

main();
