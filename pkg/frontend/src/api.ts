import type { EditOpDoc, LayerName, SceneDoc } from "./types.js";

export interface LoadResult {
  session_id: string;
  revision: number;
}

export interface EditResult {
  revision: number;
  changed_object: number;
}

export interface LayerRender {
  revision: number;
  bytes: Uint8Array;
}

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin client for the edit service; every displayed pixel comes from here. */
export class EditServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async checked(url: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(url, init);
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const body = (await resp.json()) as { error?: string };
        if (body.error) detail = body.error;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return resp;
  }

  async loadScene(doc: SceneDoc): Promise<LoadResult> {
    const resp = await this.checked(`${this.baseUrl}/api/scene`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
    return (await resp.json()) as LoadResult;
  }

  async getScene(sessionId: string): Promise<SceneDoc & { revision: number }> {
    const resp = await this.checked(`${this.baseUrl}/api/scene/${sessionId}`);
    return (await resp.json()) as SceneDoc & { revision: number };
  }

  async applyEdit(sessionId: string, op: EditOpDoc): Promise<EditResult> {
    const resp = await this.checked(`${this.baseUrl}/api/scene/${sessionId}/edit`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(op),
    });
    return (await resp.json()) as EditResult;
  }

  async undo(sessionId: string): Promise<{ revision: number }> {
    const resp = await this.checked(`${this.baseUrl}/api/scene/${sessionId}/undo`, {
      method: "POST",
    });
    return (await resp.json()) as { revision: number };
  }

  async renderLayer(
    sessionId: string,
    layer: LayerName,
    format: "png" | "pgm" = "pgm",
  ): Promise<LayerRender> {
    const resp = await this.checked(
      `${this.baseUrl}/api/scene/${sessionId}/render?layers=${layer}&format=${format}`,
    );
    const revision = Number(resp.headers.get("x-scene-revision") ?? "-1");
    const bytes = new Uint8Array(await resp.arrayBuffer());
    return { revision, bytes };
  }
}
