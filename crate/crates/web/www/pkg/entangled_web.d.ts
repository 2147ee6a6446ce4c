/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Entangled-D at `steps` evenly spaced alphas from 0 to 1.
     */
    alpha_curve(steps: number): Float64Array;
    mask_rgba(): Uint8Array;
    /**
     * Pastes the original object back onto the edited image.
     */
    merge_preview(feather: number): Uint8Array;
    constructor(size: number, seed: number);
    original_rgba(): Uint8Array;
    score(alpha: number): Float64Array;
    /**
     * `removal` blends the object towards the true background; `outer_noise`
     * damages everything else.
     */
    set_edit(removal: number, outer_noise: number): void;
    size(): number;
    unlearned_rgba(): Uint8Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_alpha_curve: (a: number, b: number) => [number, number, number, number];
    readonly demo_mask_rgba: (a: number) => [number, number];
    readonly demo_merge_preview: (a: number, b: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_original_rgba: (a: number) => [number, number];
    readonly demo_score: (a: number, b: number) => [number, number, number, number];
    readonly demo_set_edit: (a: number, b: number, c: number) => void;
    readonly demo_size: (a: number) => number;
    readonly demo_unlearned_rgba: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
