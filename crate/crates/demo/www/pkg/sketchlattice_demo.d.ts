/* tslint:disable */
/* eslint-disable */

/**
 * Off-diagonal edges `i < j` with their link strength. `nearest` selects the
 * single-neighbour rule, otherwise pairs closer than `threshold` (normalized
 * by the canvas diagonal) are linked.
 */
export function graphEdges(points: Uint32Array, side: number, nearest: boolean, threshold: number): Float64Array;

/**
 * Grid line positions (shared by both axes) for `n` lines on a `side` canvas.
 */
export function lineLocations(n: number, side: number): Uint32Array;

/**
 * Drops each point with probability `p_mask`; same seed, same survivors.
 */
export function maskPoints(points: Uint32Array, side: number, p_mask: number, seed: bigint): Uint32Array;

/**
 * Lattice points of a square canvas given as one byte per pixel (nonzero is ink).
 */
export function sampleLattice(pixels: Uint8Array, side: number, n: number): Uint32Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly graphEdges: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly lineLocations: (a: number, b: number) => [number, number, number, number];
    readonly maskPoints: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly sampleLattice: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
