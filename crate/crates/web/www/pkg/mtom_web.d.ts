/* tslint:disable */
/* eslint-disable */

/**
 * One generated episode, frame by frame.
 */
export class SceneViewer {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Egocentric view of `person` (tbd only; empty otherwise).
     */
    ego_rgba(person: number, frame: number): Uint8Array;
    /**
     * Event-log lines for `frame`.
     */
    events(frame: number): string;
    frames(): number;
    /**
     * Labels in force at `frame`, one per line.
     */
    labels(frame: number): string;
    constructor(seed: bigint, tbd: boolean, frames: number, false_belief_rate: number);
    /**
     * Third-person view.
     */
    scene_rgba(frame: number): Uint8Array;
    size(): number;
}

/**
 * PCA of both MindNets' LSTM states on synthetic tbd clips, from a freshly
 * initialised model: `[ratio1, ratio2, separability, (x, y, mind)...]`.
 */
export function pca_states(seed: bigint, episodes: number, common_ground: boolean): Float64Array;

/**
 * `[label1, label2, score1..., score2...]` where scores are the normalised
 * products `P1^tau * P2` and `P2^tau * P1`.
 */
export function rerank(p1: Float64Array, p2: Float64Array, tau: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_sceneviewer_free: (a: number, b: number) => void;
    readonly pca_states: (a: bigint, b: number, c: number) => [number, number, number, number];
    readonly rerank: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly sceneviewer_ego_rgba: (a: number, b: number, c: number) => [number, number];
    readonly sceneviewer_events: (a: number, b: number) => [number, number];
    readonly sceneviewer_frames: (a: number) => number;
    readonly sceneviewer_labels: (a: number, b: number) => [number, number];
    readonly sceneviewer_new: (a: bigint, b: number, c: number, d: number) => [number, number, number];
    readonly sceneviewer_scene_rgba: (a: number, b: number) => [number, number];
    readonly sceneviewer_size: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
