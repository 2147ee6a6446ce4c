/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_alpha_curve: (a: number, b: number) => [number, number, number, number];
export const demo_mask_rgba: (a: number) => [number, number];
export const demo_merge_preview: (a: number, b: number) => [number, number, number, number];
export const demo_new: (a: number, b: number) => [number, number, number];
export const demo_original_rgba: (a: number) => [number, number];
export const demo_score: (a: number, b: number) => [number, number, number, number];
export const demo_set_edit: (a: number, b: number, c: number) => void;
export const demo_size: (a: number) => number;
export const demo_unlearned_rgba: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
