/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `[rotation error (deg), translation error (m)]`.
     */
    error(): Float64Array;
    frame_count(): number;
    height(): number;
    /**
     * Projection MI while sweeping one offset component (0-2 meters, 3-5
     * degrees) over `center +- half_range` in `steps` samples.
     */
    mi_curve(axis: number, half_range: number, steps: number): Float64Array;
    constructor(seed: number, frames: number);
    offset(): Float64Array;
    overlay(frame: number): Uint8Array;
    /**
     * Runs the MI-maximizing optimizer from the current estimate and adopts
     * its result; returns the MI trace.
     */
    refine(iterations: number, seed: number): Float64Array;
    /**
     * Translation in meters, rotation in degrees, relative to ground truth.
     */
    set_offset(tx: number, ty: number, tz: number, rx: number, ry: number, rz: number): void;
    width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_error: (a: number) => [number, number];
    readonly demo_frame_count: (a: number) => number;
    readonly demo_height: (a: number) => number;
    readonly demo_mi_curve: (a: number, b: number, c: number, d: number) => [number, number];
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_offset: (a: number) => [number, number];
    readonly demo_overlay: (a: number, b: number) => [number, number];
    readonly demo_refine: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_set_offset: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => void;
    readonly demo_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
