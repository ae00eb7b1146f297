//! Optional SVG figures.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::experiments::PlotData;

type PlotResult<T> = Result<T, Box<dyn std::error::Error>>;

fn bounds(points: &[(f64, f64)]) -> ((f64, f64), (f64, f64)) {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 == x1 {
        x1 = x0 * 2.0 + 1.0;
    }
    if y0 == y1 {
        y1 = y0.abs() * 2.0 + 1e-12;
    }
    ((x0, x1), (y0, y1))
}

fn loglog(path: &Path, title: &str, points: &[(f64, f64)]) -> PlotResult<()> {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
    if pts.is_empty() {
        return Ok(());
    }
    let ((x0, x1), (y0, y1)) = bounds(&pts);
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((x0 * 0.8..x1 * 1.25).log_scale(), (y0 * 0.8..y1 * 1.25).log_scale())?;
    chart.configure_mesh().x_desc("N").draw()?;
    chart.draw_series(LineSeries::new(pts.iter().copied(), &BLUE))?;
    chart.draw_series(pts.iter().map(|&p| Circle::new(p, 4, BLUE.filled())))?;
    root.present()?;
    Ok(())
}

fn hamiltonian_plot(path: &Path, series: &[(usize, Vec<(f64, f64)>)]) -> PlotResult<()> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().copied()).collect();
    if all.is_empty() {
        return Ok(());
    }
    let ((x0, x1), (y0, y1)) = bounds(&all);
    let pad = 0.1 * (y1 - y0);
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("mean H_N against t", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))?;
    chart.configure_mesh().x_desc("t").draw()?;
    for (i, (n, s)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(s.iter().copied(), color))?
            .label(format!("N = {n}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

/// Write the figures that have data into `<dir>/plots`.
pub fn write_plots(dir: &Path, data: &PlotData) -> PlotResult<Vec<PathBuf>> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots)?;
    let mut written = Vec::new();
    if !data.error_vs_n.is_empty() {
        let p = plots.join("error_vs_n.svg");
        loglog(&p, "aggregated RMS error against N", &data.error_vs_n)?;
        written.push(p);
    }
    if !data.martingale_vs_n.is_empty() {
        let p = plots.join("martingale_vs_n.svg");
        loglog(&p, "E sup |M|^2 against N", &data.martingale_vs_n)?;
        written.push(p);
    }
    if !data.hamiltonian_vs_t.is_empty() {
        let p = plots.join("hamiltonian_vs_t.svg");
        hamiltonian_plot(&p, &data.hamiltonian_vs_t)?;
        written.push(p);
    }
    Ok(written)
}
