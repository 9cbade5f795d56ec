//! Self-contained SVG scatter plots: equal-aspect axes, a fixed 20-color
//! palette cycling by label id, a legend when labels are present, and
//! byte-deterministic output for identical input.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Result, TrimapError};

/// The palette baked into the binary so figures are comparable across runs.
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896",
    "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
];

fn color_for(label: i64) -> &'static str {
    PALETTE[label.rem_euclid(PALETTE.len() as i64) as usize]
}

const CELL_PLOT: f64 = 720.0;
const MARGIN: f64 = 20.0;
const LEGEND_WIDTH: f64 = 110.0;

fn check_plot_input(coords: ArrayView2<'_, f64>, labels: Option<&[i64]>) -> Result<()> {
    if coords.ncols() != 2 {
        return Err(TrimapError::Shape(format!(
            "scatter plots need 2-D coordinates, got {} columns",
            coords.ncols()
        )));
    }
    if coords.nrows() == 0 {
        return Err(TrimapError::EmptyInput("no points to plot".into()));
    }
    if let Some(labels) = labels {
        if labels.len() != coords.nrows() {
            return Err(TrimapError::Shape(format!(
                "{} labels for {} points",
                labels.len(),
                coords.nrows()
            )));
        }
    }
    for (i, row) in coords.rows().into_iter().enumerate() {
        if !row[0].is_finite() || !row[1].is_finite() {
            return Err(TrimapError::NonFinite(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
    }
    Ok(())
}

/// Emits the `<circle>` markers of one scatter cell into `out`, mapped into
/// the square with corner `(ox, oy)` and side `side`, preserving aspect.
fn scatter_group(
    out: &mut String,
    coords: ArrayView2<'_, f64>,
    labels: Option<&[i64]>,
    ox: f64,
    oy: f64,
    side: f64,
    point_size: f64,
) {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in coords.rows() {
        min_x = min_x.min(row[0]);
        max_x = max_x.max(row[0]);
        min_y = min_y.min(row[1]);
        max_y = max_y.max(row[1]);
    }
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);
    let scale = (side / span_x).min(side / span_y);
    // Center the (equal-aspect) data box inside the cell; flip y so larger
    // values plot upward.
    let off_x = ox + (side - scale * span_x) / 2.0;
    let off_y = oy + (side - scale * span_y) / 2.0;

    for (i, row) in coords.rows().into_iter().enumerate() {
        let px = off_x + (row[0] - min_x) * scale;
        let py = off_y + (max_y - row[1]) * scale;
        let color = labels.map_or(PALETTE[0], |l| color_for(l[i]));
        let _ = writeln!(
            out,
            r#"<circle cx="{px:.3}" cy="{py:.3}" r="{point_size:.3}" fill="{color}"/>"#
        );
    }
}

fn legend_group(out: &mut String, labels: &[i64], ox: f64, oy: f64) {
    let mut distinct: Vec<i64> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    for (row, label) in distinct.iter().enumerate() {
        let y = oy + 18.0 * row as f64;
        let color = color_for(*label);
        let _ = writeln!(
            out,
            r#"<g class="legend-entry"><circle cx="{ox:.3}" cy="{y:.3}" r="5" fill="{color}"/><text x="{tx:.3}" y="{ty:.3}" font-family="sans-serif" font-size="12">{label}</text></g>"#,
            tx = ox + 12.0,
            ty = y + 4.0,
        );
    }
}

/// Renders a 2-D scatter plot. Output bytes are a pure function of the
/// input, so identical runs produce identical files.
pub fn render_scatter_svg(
    coords: ArrayView2<'_, f64>,
    labels: Option<&[i64]>,
    point_size: f64,
) -> Result<String> {
    check_plot_input(coords, labels)?;
    if point_size <= 0.0 || !point_size.is_finite() {
        return Err(TrimapError::Parameter(format!(
            "point size must be positive, got {point_size}"
        )));
    }

    let plot = CELL_PLOT;
    let width = MARGIN * 2.0 + plot + if labels.is_some() { LEGEND_WIDTH } else { 0.0 };
    let height = MARGIN * 2.0 + plot;
    let mut out = String::with_capacity(coords.nrows() * 64 + 512);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#);
    scatter_group(&mut out, coords, labels, MARGIN, MARGIN, plot, point_size);
    if let Some(labels) = labels {
        legend_group(&mut out, labels, MARGIN * 2.0 + plot + 10.0, MARGIN + 10.0);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// One panel of a sweep grid.
#[derive(Clone, Debug)]
pub struct GridCell {
    pub title: String,
    pub coords: ndarray::Array2<f64>,
    pub labels: Option<Vec<i64>>,
}

/// Renders cells as a fixed-column grid of equal-aspect scatter panels with
/// a title above each, the layout used for parameter studies.
pub fn render_scatter_grid(cells: &[GridCell], columns: usize, point_size: f64) -> Result<String> {
    if cells.is_empty() {
        return Err(TrimapError::EmptyInput("no grid cells".into()));
    }
    if columns == 0 {
        return Err(TrimapError::Parameter("grid needs at least one column".into()));
    }
    for cell in cells {
        check_plot_input(cell.coords.view(), cell.labels.as_deref())?;
    }
    let side = 240.0;
    let pad = 16.0;
    let title_h = 18.0;
    let rows = cells.len().div_ceil(columns);
    let width = pad + columns as f64 * (side + pad);
    let height = pad + rows as f64 * (side + title_h + pad);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#);
    for (idx, cell) in cells.iter().enumerate() {
        let col = idx % columns;
        let row = idx / columns;
        let ox = pad + col as f64 * (side + pad);
        let oy = pad + row as f64 * (side + title_h + pad);
        let _ = writeln!(
            out,
            r#"<text x="{tx:.3}" y="{ty:.3}" font-family="sans-serif" font-size="13" text-anchor="middle">{title}</text>"#,
            tx = ox + side / 2.0,
            ty = oy + 13.0,
            title = cell.title,
        );
        let _ = writeln!(
            out,
            r##"<rect x="{ox:.3}" y="{ry:.3}" width="{side:.3}" height="{side:.3}" fill="none" stroke="#cccccc"/>"##,
            ry = oy + title_h,
        );
        scatter_group(
            &mut out,
            cell.coords.view(),
            cell.labels.as_deref(),
            ox,
            oy + title_h,
            side,
            point_size,
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Renders and writes in one go.
pub fn write_scatter_svg(
    coords: ArrayView2<'_, f64>,
    labels: Option<&[i64]>,
    point_size: f64,
    path: &Path,
) -> Result<()> {
    let svg = render_scatter_svg(coords, labels, point_size)?;
    std::fs::write(path, svg).map_err(|e| TrimapError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
