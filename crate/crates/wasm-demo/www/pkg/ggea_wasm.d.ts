/* tslint:disable */
/* eslint-disable */

export class AverageResult {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    averaged: Uint8Array;
    noisy: Uint8Array;
    psnr_averaged: number;
    psnr_single: number;
}

export function average_demo(rgba: Uint8Array, width: number, height: number, frames: number, sigma: number, seed: bigint): AverageResult;

export function lr_curve(lr_init: number, lr_min: number, warmup_epochs: number, total_epochs: number, steps_per_epoch: number): Float32Array;

export function weight_map_rgba(rgba: Uint8Array, width: number, height: number, variant: string): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_averageresult_free: (a: number, b: number) => void;
    readonly __wbg_get_averageresult_averaged: (a: number) => [number, number];
    readonly __wbg_get_averageresult_noisy: (a: number) => [number, number];
    readonly __wbg_get_averageresult_psnr_averaged: (a: number) => number;
    readonly __wbg_get_averageresult_psnr_single: (a: number) => number;
    readonly __wbg_set_averageresult_averaged: (a: number, b: number, c: number) => void;
    readonly __wbg_set_averageresult_noisy: (a: number, b: number, c: number) => void;
    readonly __wbg_set_averageresult_psnr_averaged: (a: number, b: number) => void;
    readonly __wbg_set_averageresult_psnr_single: (a: number, b: number) => void;
    readonly average_demo: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number];
    readonly lr_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly weight_map_rgba: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
