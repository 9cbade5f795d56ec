//! The demo logic proper, kept free of wasm types so it runs (and is
//! tested) natively.

use trimap::dataset::Dataset;
use trimap::io::parse_matrix_csv;
use trimap::math::{exp_t, log_t};
use trimap::optimizer::{embed, EmbedConfig};
use trimap::svg::render_scatter_svg;

fn demo_config(n: usize, t: f64, t_prime: f64, iterations: u32, seed: u32) -> EmbedConfig {
    EmbedConfig {
        t,
        t_prime,
        // Small datasets in a browser tab: keep the sampler proportionate.
        m: 15.min(n.saturating_sub(2)).max(1),
        m_prime: 5,
        s: 5,
        iterations: (iterations as usize).max(1),
        seed: seed as u64,
        ..EmbedConfig::default()
    }
}

pub fn embed_blobs(
    n_blobs: u32,
    per_blob: u32,
    separation: f64,
    t: f64,
    t_prime: f64,
    iterations: u32,
    seed: u32,
) -> Result<String, String> {
    let n_blobs = n_blobs.clamp(1, 10) as usize;
    let per_blob = per_blob.clamp(3, 200) as usize;
    let data = Dataset::gaussian_blobs(n_blobs, per_blob, 10.max(n_blobs), separation, seed as u64)
        .map_err(|e| e.to_string())?;
    let config = demo_config(data.n_points(), t, t_prime, iterations, seed);
    let embedding = embed(&data, &config).map_err(|e| e.to_string())?;
    render_scatter_svg(embedding.coords.view(), data.labels(), 2.5).map_err(|e| e.to_string())
}

pub fn embed_csv(
    csv_text: &str,
    labels_text: &str,
    t: f64,
    t_prime: f64,
    iterations: u32,
    seed: u32,
) -> Result<String, String> {
    let points = parse_matrix_csv(csv_text, ',', "pasted csv").map_err(|e| e.to_string())?;
    let data = if labels_text.trim().is_empty() {
        Dataset::new(points)
    } else {
        let labels = trimap::io::parse_labels(labels_text, "pasted labels")
            .map_err(|e| e.to_string())?;
        Dataset::with_labels(points, labels)
    }
    .map_err(|e| e.to_string())?;
    let config = demo_config(data.n_points(), t, t_prime, iterations, seed);
    let embedding = embed(&data, &config).map_err(|e| e.to_string())?;
    render_scatter_svg(embedding.coords.view(), data.labels(), 2.5).map_err(|e| e.to_string())
}

/// Two side-by-side function plots sampled at fixed resolution, so the
/// output bytes depend only on (t, t').
pub fn kernel_curves(t: f64, t_prime: f64) -> Result<String, String> {
    if t < 0.0 || !t.is_finite() {
        return Err(format!("t must be finite and >= 0, got {t}"));
    }
    if t_prime < 1.0 || !t_prime.is_finite() {
        return Err(format!("t' must be finite and >= 1, got {t_prime}"));
    }

    const SAMPLES: usize = 200;
    let loss_curve: Vec<(f64, f64)> = (0..=SAMPLES)
        .map(|i| {
            let l = 10.0 * i as f64 / SAMPLES as f64;
            (l, log_t(1.0 + l, t).expect("1 + l >= 1"))
        })
        .collect();
    let sim_curve: Vec<(f64, f64)> = (0..=SAMPLES)
        .map(|i| {
            let u = 4.0 * i as f64 / SAMPLES as f64;
            (u, exp_t(-u * u, t_prime).expect("argument <= 0"))
        })
        .collect();

    let panel = |curve: &[(f64, f64)], ox: f64, title: &str| -> String {
        let (w, h) = (320.0, 240.0);
        let max_y = curve
            .iter()
            .map(|&(_, y)| y)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(1e-9);
        let max_x = curve.last().unwrap().0;
        let points: Vec<String> = curve
            .iter()
            .map(|&(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    ox + 40.0 + x / max_x * (w - 60.0),
                    20.0 + (1.0 - y / max_y) * (h - 60.0)
                )
            })
            .collect();
        format!(
            concat!(
                r#"<text x="{tx:.0}" y="14" font-family="sans-serif" font-size="13" text-anchor="middle">{title}</text>"#,
                "\n",
                r##"<rect x="{bx:.0}" y="20" width="{bw:.0}" height="{bh:.0}" fill="none" stroke="#cccccc"/>"##,
                "\n",
                r##"<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="2"/>"##,
                "\n"
            ),
            tx = ox + w / 2.0,
            title = title,
            bx = ox + 40.0,
            bw = w - 60.0,
            bh = h - 60.0,
            pts = points.join(" "),
        )
    };

    let mut svg = String::from(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="680" height="250" viewBox="0 0 680 250">"#,
    );
    svg.push('\n');
    svg.push_str(r#"<rect width="680" height="250" fill="white"/>"#);
    svg.push('\n');
    svg.push_str(&panel(&loss_curve, 0.0, &format!("loss transform, t={t}")));
    svg.push_str(&panel(&sim_curve, 340.0, &format!("similarity kernel, t'={t_prime}")));
    svg.push_str("</svg>\n");
    Ok(svg)
}
