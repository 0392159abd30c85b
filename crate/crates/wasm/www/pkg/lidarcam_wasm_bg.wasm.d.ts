/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_error: (a: number) => [number, number];
export const demo_frame_count: (a: number) => number;
export const demo_height: (a: number) => number;
export const demo_mi_curve: (a: number, b: number, c: number, d: number) => [number, number];
export const demo_new: (a: number, b: number) => [number, number, number];
export const demo_offset: (a: number) => [number, number];
export const demo_overlay: (a: number, b: number) => [number, number];
export const demo_refine: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_set_offset: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => void;
export const demo_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
