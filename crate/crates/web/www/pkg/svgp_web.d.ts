/* tslint:disable */
/* eslint-disable */

/**
 * Inputs from a three-cluster mixture with k-DPP, greedy and uniform picks.
 */
export class DispersionView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Mean nearest-neighbour distance within each selection, in the order
     * k-DPP, greedy, uniform.
     */
    spread(): Float64Array;
    readonly greedy: Uint32Array;
    readonly inputs: Float64Array;
    readonly kdpp: Uint32Array;
    readonly uniform: Uint32Array;
}

/**
 * Closed-form, quadrature and sample eigenvalues of an SE kernel under
 * N(0, s²) inputs.
 */
export class SpectrumView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly analytic: Float64Array;
    readonly quadrature: Float64Array;
    /**
     * Eigenvalues of K_ff / N on a random sample.
     */
    readonly sample: Float64Array;
}

/**
 * KL and the a posteriori gap along greedy nested inducing sets.
 */
export class SweepView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Upper bound minus ELBO.
     */
    readonly gap: Float64Array;
    /**
     * Entry `k` is for M = k + 1.
     */
    readonly kl: Float64Array;
    /**
     * tr(K_ff − Q_ff).
     */
    readonly trace: Float64Array;
}

export function dispersion(lengthscale: number, n: number, m: number, steps: number, seed: number): DispersionView;

export function spectrum(lengthscale: number, input_std: number, count: number, n: number, seed: number): SpectrumView;

export function sweep(lengthscale: number, noise: number, n: number, m_max: number, seed: number): SweepView;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_dispersionview_free: (a: number, b: number) => void;
    readonly __wbg_spectrumview_free: (a: number, b: number) => void;
    readonly __wbg_sweepview_free: (a: number, b: number) => void;
    readonly dispersion: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly dispersionview_greedy: (a: number) => [number, number];
    readonly dispersionview_inputs: (a: number) => [number, number];
    readonly dispersionview_kdpp: (a: number) => [number, number];
    readonly dispersionview_spread: (a: number) => [number, number];
    readonly dispersionview_uniform: (a: number) => [number, number];
    readonly spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly spectrumview_analytic: (a: number) => [number, number];
    readonly spectrumview_quadrature: (a: number) => [number, number];
    readonly spectrumview_sample: (a: number) => [number, number];
    readonly sweep: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly sweepview_gap: (a: number) => [number, number];
    readonly sweepview_kl: (a: number) => [number, number];
    readonly sweepview_trace: (a: number) => [number, number];
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
