/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_dispersionview_free: (a: number, b: number) => void;
export const __wbg_spectrumview_free: (a: number, b: number) => void;
export const __wbg_sweepview_free: (a: number, b: number) => void;
export const dispersion: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const dispersionview_greedy: (a: number) => [number, number];
export const dispersionview_inputs: (a: number) => [number, number];
export const dispersionview_kdpp: (a: number) => [number, number];
export const dispersionview_spread: (a: number) => [number, number];
export const dispersionview_uniform: (a: number) => [number, number];
export const spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const spectrumview_analytic: (a: number) => [number, number];
export const spectrumview_quadrature: (a: number) => [number, number];
export const spectrumview_sample: (a: number) => [number, number];
export const sweep: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const sweepview_gap: (a: number) => [number, number];
export const sweepview_kl: (a: number) => [number, number];
export const sweepview_trace: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
