/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_sceneviewer_free: (a: number, b: number) => void;
export const pca_states: (a: bigint, b: number, c: number) => [number, number, number, number];
export const rerank: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const sceneviewer_ego_rgba: (a: number, b: number, c: number) => [number, number];
export const sceneviewer_events: (a: number, b: number) => [number, number];
export const sceneviewer_frames: (a: number) => number;
export const sceneviewer_labels: (a: number, b: number) => [number, number];
export const sceneviewer_new: (a: bigint, b: number, c: number, d: number) => [number, number, number];
export const sceneviewer_scene_rgba: (a: number, b: number) => [number, number];
export const sceneviewer_size: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
