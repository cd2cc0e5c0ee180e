//! CSV tables, SVG line plots and the run manifest.
//!
//! Numbers are written with `f64`'s `Display`, the shortest text that parses
//! back to the same value, so identical results give identical bytes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use mbcrb_core::{BoundReport, ErrorReference, SweepResult};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Files written into an output directory; removed again unless committed.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            created_root,
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> io::Result<PathBuf> {
        let path = self.path(name);
        self.written.push(path.clone());
        fs::write(&path, contents)?;
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.into_inner().map_err(|e| e.into_error())
}

fn matrix_rows(name: &str, m: &DMatrix<f64>) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            rows.push(vec![name.to_string(), i.to_string(), j.to_string(), m[(i, j)].to_string()]);
        }
    }
    rows
}

/// Long-format `quantity,row,col,value` table of every bound matrix.
pub fn bound_csv(report: &BoundReport, map_error_covariance: &DMatrix<f64>) -> io::Result<Vec<u8>> {
    let offset = DMatrix::from_column_slice(report.pseudotrue_offset.len(), 1, report.pseudotrue_offset.as_slice());
    let mut rows = Vec::new();
    rows.extend(matrix_rows("pseudotrue_gain", &report.pseudotrue_gain));
    rows.extend(matrix_rows("pseudotrue_offset", &offset));
    rows.extend(matrix_rows("bfim_data", &report.bfim.data_term));
    rows.extend(matrix_rows("bfim_prior", &report.bfim.prior_term));
    rows.extend(matrix_rows("bfim", &report.bfim.total));
    rows.extend(matrix_rows("bcrb", &report.bcrb));
    rows.extend(matrix_rows("mbcrb", &report.mbcrb));
    if let Some(biased) = &report.biased_bound {
        rows.extend(matrix_rows("biased_bound", biased));
    }
    rows.extend(matrix_rows("map_error_covariance", map_error_covariance));
    csv_bytes(&["quantity", "row", "col", "value"], rows)
}

/// Diagonals and traces of the bound matrices, as `quantity,statistic,index,value`.
pub fn bound_summary_csv(report: &BoundReport) -> io::Result<Vec<u8>> {
    let mut named: Vec<(&str, &DMatrix<f64>)> = vec![("bcrb", &report.bcrb), ("mbcrb", &report.mbcrb)];
    if let Some(biased) = &report.biased_bound {
        named.push(("biased_bound", biased));
    }
    let mut rows = Vec::new();
    for (name, m) in named {
        for (i, d) in m.diagonal().iter().enumerate() {
            rows.push(vec![name.to_string(), "diagonal".into(), i.to_string(), d.to_string()]);
        }
        rows.push(vec![name.to_string(), "trace".into(), String::new(), m.trace().to_string()]);
    }
    csv_bytes(&["quantity", "statistic", "index", "value"], rows)
}

pub fn floor_column(reference: ErrorReference) -> &'static str {
    match reference {
        ErrorReference::Pseudotrue => "mbcrb_floor",
        ErrorReference::TrueParameter => "biased_bound_floor",
    }
}

/// One row per (grid point, component).
pub fn sweep_csv(results: &[SweepResult], reference: ErrorReference) -> io::Result<Vec<u8>> {
    let rows = results.iter().flat_map(|r| {
        (0..r.rmse.len()).map(move |i| {
            vec![
                r.axis_value.to_string(),
                i.to_string(),
                r.rmse[i].to_string(),
                r.rmse_standard_error[i].to_string(),
                r.bound_rmse_floor[i].to_string(),
                r.bcrb_floor[i].to_string(),
            ]
        })
    });
    csv_bytes(
        &["axis_value", "component_index", "rmse", "rmse_stderr", floor_column(reference), "bcrb_floor"],
        rows,
    )
}

/// Aggregate `sqrt(E‖e‖²)` per grid point.
pub fn sweep_trace_csv(results: &[SweepResult]) -> io::Result<Vec<u8>> {
    let rows = results.iter().map(|r| {
        vec![
            r.axis_value.to_string(),
            r.trace_rmse.to_string(),
            r.trace_rmse_standard_error.to_string(),
            r.trace_bound_floor.to_string(),
        ]
    });
    csv_bytes(&["axis_value", "trace_rmse", "trace_rmse_stderr", "trace_bound_floor"], rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// `[min, max]` padded by 5% of the span on each side.
fn padded_extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// Line chart with one `<polyline>` per series.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const WIDTH: f64 = 640.0;
    const HEIGHT: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 170.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;
    let (x0, x1) = padded_extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = padded_extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg += &format!("<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n");
    svg += &format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        LEFT + plot_w / 2.0,
        escape(title)
    );
    svg += &format!(
        "<rect class=\"frame\" x=\"{LEFT}\" y=\"{TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\"/>\n"
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        svg += &format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            sx(fx),
            TOP + plot_h + 18.0,
            tick(fx)
        );
        svg += &format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            LEFT - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    svg += &format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    svg += &format!(
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let points: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg += &format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"><title>{}</title></polyline>\n",
            s.color,
            points.join(" "),
            escape(&s.label)
        );
        let ly = TOP + 12.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        svg += &format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            lx + 20.0,
            s.color
        );
        svg += &format!("<text x=\"{}\" y=\"{}\">{}</text>\n", lx + 26.0, ly + 4.0, escape(&s.label));
    }
    svg += "</svg>\n";
    svg
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

pub fn axis_label(axis: mbcrb_core::SweepAxis) -> &'static str {
    match axis {
        mbcrb_core::SweepAxis::SampleCount => "N",
        mbcrb_core::SweepAxis::AssumedGain => "h",
        mbcrb_core::SweepAxis::AssumedNoiseVariance => "sigma^2",
    }
}

/// One chart per parameter component: RMSE, the matching bound, and the BCRB.
pub fn component_charts(
    results: &[SweepResult],
    axis: mbcrb_core::SweepAxis,
    reference: ErrorReference,
) -> Vec<(String, String)> {
    let dim = results.first().map_or(0, |r| r.rmse.len());
    let bound_label = match reference {
        ErrorReference::Pseudotrue => "sqrt(MBCRB)",
        ErrorReference::TrueParameter => "sqrt(MBCRB + E{rr'})",
    };
    (0..dim)
        .map(|i| {
            let collect = |f: &dyn Fn(&SweepResult) -> f64| results.iter().map(|r| (r.axis_value, f(r))).collect();
            let series = [
                Series {
                    label: "RMSE".into(),
                    color: "#1f77b4",
                    points: collect(&|r| r.rmse[i]),
                },
                Series {
                    label: bound_label.into(),
                    color: "#d62728",
                    points: collect(&|r| r.bound_rmse_floor[i]),
                },
                Series {
                    label: "sqrt(BCRB)".into(),
                    color: "#2ca02c",
                    points: collect(&|r| r.bcrb_floor[i]),
                },
            ];
            let title = format!("Component {i}");
            let name = format!("component_{i}.svg");
            (name, line_chart_svg(&title, axis_label(axis), "RMSE", &series))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub trials: usize,
    pub config_sha256: String,
    pub config_path: String,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extent_is_padded() {
        assert_eq!(padded_extent([0.0, 10.0].into_iter()), (-0.5, 10.5));
        let (lo, hi) = padded_extent([2.0].into_iter());
        assert!(lo < 2.0 && hi > 2.0);
    }

    #[test]
    fn chart_has_one_polyline_per_series() {
        let series: Vec<Series> = (0..3)
            .map(|k| Series {
                label: format!("s<{k}>"),
                color: "black",
                points: vec![(1.0, k as f64), (2.0, 1.0)],
            })
            .collect();
        let svg = line_chart_svg("t & u", "x", "y", &series);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("s&lt;2&gt;"));
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn uncommitted_outputs_are_removed() {
        let tmp = std::env::temp_dir().join(format!("mbcrb-output-test-{}", std::process::id()));
        {
            let mut out = OutputDir::create(&tmp).unwrap();
            out.write("a.csv", b"x").unwrap();
            assert!(tmp.join("a.csv").exists());
        }
        assert!(!tmp.exists());
    }
}
