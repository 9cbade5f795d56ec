//! wasm-bindgen surface for the browser demo. Every export takes plain
//! numbers/strings and returns an SVG document as a string, so the page
//! needs no framework and no shared memory.

mod demo;

use wasm_bindgen::prelude::*;

/// Embeds synthetic Gaussian blobs and returns the scatter SVG.
#[wasm_bindgen]
pub fn embed_blobs(
    n_blobs: u32,
    per_blob: u32,
    separation: f64,
    t: f64,
    t_prime: f64,
    iterations: u32,
    seed: u32,
) -> Result<String, JsError> {
    demo::embed_blobs(n_blobs, per_blob, separation, t, t_prime, iterations, seed)
        .map_err(|e| JsError::new(&e))
}

/// Plots the loss transformation `l -> log_t(1 + l)` and the similarity
/// kernel `u -> exp_t'(-u^2)` for the chosen parameters.
#[wasm_bindgen]
pub fn kernel_curves(t: f64, t_prime: f64) -> Result<String, JsError> {
    demo::kernel_curves(t, t_prime).map_err(|e| JsError::new(&e))
}

/// Embeds a pasted CSV (optional labels, one integer per line) and returns
/// the scatter SVG.
#[wasm_bindgen]
pub fn embed_csv(
    csv_text: &str,
    labels_text: &str,
    t: f64,
    t_prime: f64,
    iterations: u32,
    seed: u32,
) -> Result<String, JsError> {
    demo::embed_csv(csv_text, labels_text, t, t_prime, iterations, seed)
        .map_err(|e| JsError::new(&e))
}
