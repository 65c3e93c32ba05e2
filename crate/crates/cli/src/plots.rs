//! SVG line charts from the plot data files. Each `.csv` in the directory
//! holds `#`-commented blocks separated by blank lines, one block per series,
//! with `x,y[,...]` rows.

use std::path::Path;

use anyhow::{Context, Result};
use plotters::prelude::*;

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn parse(body: &str) -> (String, Vec<Series>) {
    let mut header = String::new();
    let mut series: Vec<Series> = Vec::new();
    let mut fresh = true;
    for line in body.lines() {
        let line = line.trim();
        if line.is_empty() {
            fresh = true;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if header.is_empty() {
                header = comment.to_string();
            } else if fresh {
                series.push(Series { label: comment.to_string(), points: Vec::new() });
                fresh = false;
            }
            continue;
        }
        if fresh || series.is_empty() {
            series.push(Series { label: format!("series {}", series.len()), points: Vec::new() });
            fresh = false;
        }
        let mut cols = line.split(',').map(|c| c.trim().parse::<f64>());
        if let (Some(Ok(x)), Some(Ok(y))) = (cols.next(), cols.next()) {
            if x.is_finite() && y.is_finite() {
                series.last_mut().expect("series pushed").points.push((x, y));
            }
        }
    }
    series.retain(|s| !s.points.is_empty());
    (header, series)
}

/// Render one file. Error plots use log-log axes, coverage plots linear ones
/// with a line at 0.95.
pub fn render(name: &str, body: &str, out: &Path) -> Result<()> {
    let (header, series) = parse(body);
    let root = SVGBackend::new(out, (640, 420)).into_drawing_area();
    root.fill(&WHITE)?;
    if series.is_empty() {
        root.present()?;
        return Ok(());
    }
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let y_label = header.split(',').nth(1).unwrap_or("value").to_string();
    let coverage = name.starts_with("coverage");
    let mut chart = ChartBuilder::on(&root);
    chart.caption(name.trim_end_matches(".csv"), ("sans-serif", 18)).margin(12).x_label_area_size(36).y_label_area_size(56);
    let colours = [&BLUE, &RED, &GREEN, &MAGENTA, &CYAN, &BLACK];
    if coverage {
        let lo = y0.min(0.85);
        let mut c = chart.build_cartesian_2d(x0 * 0.9..x1 * 1.1, lo..1.0)?;
        c.configure_mesh().x_desc("N").y_desc(&y_label).draw()?;
        c.draw_series(LineSeries::new(vec![(x0 * 0.9, 0.95), (x1 * 1.1, 0.95)], BLACK.mix(0.4)))?;
        for (k, s) in series.iter().enumerate() {
            let col = colours[k % colours.len()];
            c.draw_series(LineSeries::new(s.points.clone(), col))?.label(&s.label).legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 16, y)], col)
            });
            c.draw_series(s.points.iter().map(|&p| Circle::new(p, 3, col.filled())))?;
        }
        c.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw()?;
    } else {
        let (ylo, yhi) = (y0.max(f64::MIN_POSITIVE) * 0.8, y1 * 1.25);
        let mut c = chart.build_cartesian_2d((x0 * 0.9..x1 * 1.1).log_scale(), (ylo..yhi).log_scale())?;
        c.configure_mesh().x_desc("N").y_desc(&y_label).draw()?;
        for (k, s) in series.iter().enumerate() {
            let col = colours[k % colours.len()];
            let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|p| p.1 > 0.0).collect();
            c.draw_series(LineSeries::new(pts.clone(), col))?.label(&s.label).legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 16, y)], col)
            });
            c.draw_series(pts.into_iter().map(|p| Circle::new(p, 3, col.filled())))?;
        }
        c.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw()?;
    }
    root.present()?;
    Ok(())
}

/// Render every `.csv` in `dir` to a sibling `.svg`.
pub fn render_dir(dir: &Path) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.extension().is_some_and(|x| x == "csv") {
            let body = std::fs::read_to_string(&path)?;
            let name = e.file_name().to_string_lossy().into_owned();
            render(&name, &body, &path.with_extension("svg")).with_context(|| format!("rendering {name}"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_blocks() {
        let body = "# n,median_error\n# series 0 alpha 0.5\n100,0.3\n200,0.2\n\n\n# series 1 alpha 1\n100,0.1\n200,NaN\n";
        let (header, s) = parse(body);
        assert_eq!(header, "n,median_error");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].points, vec![(100.0, 0.3), (200.0, 0.2)]);
        assert_eq!(s[1].label, "series 1 alpha 1");
        assert_eq!(s[1].points.len(), 1);
    }
}
