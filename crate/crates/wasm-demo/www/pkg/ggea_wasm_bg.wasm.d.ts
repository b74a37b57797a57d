/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_averageresult_free: (a: number, b: number) => void;
export const __wbg_get_averageresult_averaged: (a: number) => [number, number];
export const __wbg_get_averageresult_noisy: (a: number) => [number, number];
export const __wbg_get_averageresult_psnr_averaged: (a: number) => number;
export const __wbg_get_averageresult_psnr_single: (a: number) => number;
export const __wbg_set_averageresult_averaged: (a: number, b: number, c: number) => void;
export const __wbg_set_averageresult_noisy: (a: number, b: number, c: number) => void;
export const __wbg_set_averageresult_psnr_averaged: (a: number, b: number) => void;
export const __wbg_set_averageresult_psnr_single: (a: number, b: number) => void;
export const average_demo: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number];
export const lr_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const weight_map_rgba: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
