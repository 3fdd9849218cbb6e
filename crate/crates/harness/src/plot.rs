//! Static SVG plots of mean ± confidence interval per x value.

use std::path::Path;

use anyhow::{anyhow, Result};
use plotters::prelude::*;

/// One line: `(x, mean, ci half-width)` points.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, f64)>,
}

const COLORS: [RGBColor; 4] = [BLUE, RED, GREEN, MAGENTA];

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { (hi - lo) * 0.05 } else { lo.abs().max(1.0) * 0.05 };
    (lo - pad, hi + pad)
}

/// Writes an SVG with one line per series and vertical error bars. With
/// `log_x` the x axis shows `log10(x)`.
pub fn plot_series(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> Result<()> {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let xs = span(series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))));
    let ys = span(series.iter().flat_map(|s| s.points.iter().flat_map(|p| [p.1 - p.2, p.1 + p.2])));

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(xs.0..xs.1, ys.0..ys.1)
        .map_err(|e| anyhow!("{e}"))?;
    let x_desc = if log_x { format!("log10({x_label})") } else { x_label.to_owned() };
    chart.configure_mesh().x_desc(x_desc).y_desc(y_label).draw().map_err(|e| anyhow!("{e}"))?;

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().map(|p| (tx(p.0), p.1)).collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(|e| anyhow!("{e}"))?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled()))).map_err(|e| anyhow!("{e}"))?;
        chart
            .draw_series(s.points.iter().map(|p| {
                PathElement::new(vec![(tx(p.0), p.1 - p.2), (tx(p.0), p.1 + p.2)], color.stroke_width(1))
            }))
            .map_err(|e| anyhow!("{e}"))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_an_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.svg");
        let s = Series { label: "Q".into(), points: vec![(0.01, 3.0, 0.5), (0.1, 1.0, 0.2), (1.0, 0.4, 0.1)] };
        plot_series(&path, "quality", "epsilon", "Q", &[s], true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
    }
}
