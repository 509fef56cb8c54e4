//! Log-log charts of the study tables, one SVG per pairing.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use waveqn::experiments::{read_csv, ExperimentRecord, Status};
use waveqn::Pairing;

use crate::{CliError, Result};

type Series = BTreeMap<String, Vec<(f64, f64)>>;

struct Chart {
    title: String,
    x_desc: &'static str,
    series: Series,
}

pub fn plot_csv(csv: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let file = File::open(csv).map_err(|source| CliError::Io {
        path: csv.to_path_buf(),
        source,
    })?;
    let rows = read_csv(file)?;
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("chart");
    emit_plots(&rows, stem, out)
}

/// Writes `<stem>_<pairing>.svg` for every pairing with plottable rows.
/// Grid-size rows are drawn as error over `N` with one line per `N_QN`,
/// everything else as error over work with one line per method.
pub fn emit_plots(rows: &[ExperimentRecord], stem: &str, out: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(waveqn::Error::MissingData(format!("no rows for {stem}")).into());
    }
    let mut files = Vec::new();
    for pairing in Pairing::ALL {
        let chart = chart_for(rows, pairing);
        if chart.series.values().all(Vec::is_empty) {
            continue;
        }
        let path = out.join(format!("{stem}_{pairing}.svg"));
        draw(&chart, &path)?;
        files.push(path);
    }
    if files.is_empty() {
        return Err(waveqn::Error::MissingData(format!("no plottable rows for {stem}")).into());
    }
    Ok(files)
}

fn chart_for(rows: &[ExperimentRecord], pairing: Pairing) -> Chart {
    let mut series = Series::new();
    let grid = rows.iter().all(|r| r.case.starts_with("grid/"));
    for r in rows.iter().filter(|r| r.pairing == pairing) {
        if r.status == Status::Failed || !(r.error_last_step > 0.0 && r.error_last_step.is_finite()) {
            continue;
        }
        let (label, x) = if grid {
            match (r.n, r.n_qn) {
                (Some(n), Some(n_qn)) => (format!("N_QN = {n_qn:>6}"), n as f64),
                _ => continue,
            }
        } else if r.strategy.is_empty() {
            (r.method.clone(), r.work as f64)
        } else {
            (format!("{} {}", r.method, r.strategy), r.work as f64)
        };
        series.entry(label).or_default().push((x, r.error_last_step));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    let (title, x_desc) = if grid {
        (format!("{pairing}: last-step error over base steps"), "base time steps N")
    } else {
        (format!("{pairing}: error over work"), "work (subsolver time steps)")
    };
    Chart { title, x_desc, series }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (lo / 1.5, hi * 1.5)
}

fn draw(chart: &Chart, path: &Path) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| CliError::Plot(format!("{}: {e}", path.display()));
    let all = || chart.series.values().flatten();
    let (x0, x1) = bounds(all().map(|p| p.0));
    let (y0, y1) = bounds(all().map(|p| p.1));

    let root = SVGBackend::new(path, (800, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut ctx = ChartBuilder::on(&root)
        .caption(&chart.title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(70)
        .build_cartesian_2d((x0..x1).log_scale(), (y0..y1).log_scale())
        .map_err(|e| plot_err(&e))?;
    ctx.configure_mesh()
        .x_desc(chart.x_desc)
        .y_desc("error at final time")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(|e| plot_err(&e))?;
    for (i, (label, pts)) in chart.series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        ctx.draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        ctx.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(|e| plot_err(&e))?;
    }
    ctx.configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperRight)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}
