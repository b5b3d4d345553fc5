import type { LayerName } from "./types.js";

export interface EditDraft {
  tgtCenter: [number, number];
  zoomRho: number;
  deltaRy: number;
}

/** Client-side session state. A draft exists only while an object is
 * selected; the displayed revision never runs ahead of the server. */
export interface EditorState {
  sessionId: string | null;
  revision: number;
  selectedObjectId: number | null;
  draft: EditDraft | null;
  layers: Set<LayerName>;
  undoDepth: number;
}

export function initialState(): EditorState {
  return {
    sessionId: null,
    revision: -1,
    selectedObjectId: null,
    draft: null,
    layers: new Set<LayerName>(["instance", "silhouette"]),
    undoDepth: 0,
  };
}

export function sessionLoaded(state: EditorState, sessionId: string): EditorState {
  return {
    ...initialState(),
    layers: new Set(state.layers),
    sessionId,
    revision: 0,
  };
}

export function objectSelected(
  state: EditorState,
  objectId: number,
  center: [number, number],
): EditorState {
  return {
    ...state,
    selectedObjectId: objectId,
    draft: { tgtCenter: center, zoomRho: 1.0, deltaRy: 0.0 },
  };
}

export function objectDeselected(state: EditorState): EditorState {
  return { ...state, selectedObjectId: null, draft: null };
}

export function draftUpdated(state: EditorState, patch: Partial<EditDraft>): EditorState {
  if (state.selectedObjectId === null || state.draft === null) {
    throw new Error("cannot update a draft without a selected object");
  }
  return { ...state, draft: { ...state.draft, ...patch } };
}

export function editCommitted(state: EditorState, revision: number): EditorState {
  if (revision < state.revision) {
    throw new Error("server revision went backwards");
  }
  const draft = state.draft
    ? { tgtCenter: state.draft.tgtCenter, zoomRho: 1.0, deltaRy: 0.0 }
    : null;
  return { ...state, revision, undoDepth: state.undoDepth + 1, draft };
}

export function editReverted(state: EditorState, revision: number): EditorState {
  // undo is the one transition allowed to roll the scene back; the revision
  // counter itself still only increases
  return {
    ...state,
    revision,
    undoDepth: Math.max(0, state.undoDepth - 1),
    selectedObjectId: null,
    draft: null,
  };
}

export function layerToggled(state: EditorState, layer: LayerName): EditorState {
  const layers = new Set(state.layers);
  if (layers.has(layer)) layers.delete(layer);
  else layers.add(layer);
  return { ...state, layers };
}

export function canUndo(state: EditorState): boolean {
  return state.undoDepth > 0;
}
