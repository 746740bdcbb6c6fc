//! SVG rendering of exported loadings and scores.

use std::collections::BTreeMap;
use std::path::Path;

use facd::io::{LoadingTable, ScoreRow};
use plotters::prelude::*;

const SIZE: (u32, u32) = (900, 540);

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Padded `[lo, hi]` covering `values`; never empty.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Indices of the `top` rows with the largest sum of squares, in descending order.
fn strongest(rows: &[Vec<f64>], top: usize) -> Vec<usize> {
    let mut idx: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.iter().map(|v| v * v).sum::<f64>()))
        .filter(|&(_, e)| e > 0.0)
        .collect();
    idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    idx.into_iter().take(top).map(|(i, _)| i).collect()
}

fn loadings_panel(
    path: &Path,
    title: &str,
    grid: &[f64],
    names: &[String],
    rows: &[Vec<f64>],
    top: usize,
) -> Result<(), String> {
    let keep = strongest(rows, top);
    let (lo, hi) = span(keep.iter().flat_map(|&i| rows[i].iter().copied()));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..1.0, lo..hi)
        .map_err(err)?;
    chart.configure_mesh().x_desc("rescaled time").y_desc("loading").draw().map_err(err)?;
    for (k, &i) in keep.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        chart
            .draw_series(LineSeries::new(grid.iter().copied().zip(rows[i].iter().copied()), color.stroke_width(2)))
            .map_err(err)?
            .label(names[i].as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    if !keep.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(err)?;
    }
    root.present().map_err(err)
}

fn scores_panel(path: &Path, title: &str, rows: &[&ScoreRow]) -> Result<(), String> {
    let (x0, x1) = span(rows.iter().map(|s| s.score_x));
    let (y0, y1) = span(rows.iter().map(|s| s.score_y));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(err)?;
    chart.configure_mesh().x_desc("score x").y_desc("score y").draw().map_err(err)?;
    chart
        .draw_series(rows.iter().map(|s| Circle::new((s.score_x, s.score_y), 3, BLUE.mix(0.6).filled())))
        .map_err(err)?;
    root.present().map_err(err)
}

/// Writes `loadings_c{r}_{x,y}.svg` and, when scores are given,
/// `scores_c{r}.svg`. Returns the number of files.
pub fn draw_all(
    loadings: &BTreeMap<usize, LoadingTable>,
    scores: &[ScoreRow],
    dir: &Path,
    top: usize,
) -> Result<usize, String> {
    let mut written = 0;
    for (&r, t) in loadings {
        for (side, names, rows) in [("x", &t.features_x, &t.x), ("y", &t.features_y, &t.y)] {
            let path = dir.join(format!("loadings_c{r}_{side}.svg"));
            loadings_panel(&path, &format!("component {r}, side {side}"), &t.grid, names, rows, top)?;
            written += 1;
        }
    }
    let mut by_component: BTreeMap<usize, Vec<&ScoreRow>> = BTreeMap::new();
    for s in scores {
        by_component.entry(s.component).or_default().push(s);
    }
    for (r, rows) in by_component {
        scores_panel(&dir.join(format!("scores_c{r}.svg")), &format!("component {r} scores"), &rows)?;
        written += 1;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_pads_and_survives_degenerate_input() {
        let (lo, hi) = span([1.0, 3.0].into_iter());
        assert!(lo < 1.0 && hi > 3.0);
        let (lo, hi) = span([2.0, 2.0].into_iter());
        assert!(lo < 2.0 && hi > 2.0);
        assert_eq!(span(std::iter::empty()), (-1.0, 1.0));
    }

    #[test]
    fn strongest_orders_by_energy_and_skips_zeros() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 1.0], vec![0.0, 2.0]];
        assert_eq!(strongest(&rows, 2), vec![2, 3]);
        assert_eq!(strongest(&rows, 10), vec![2, 3, 1]);
    }
}
