//! CSV reports and the SVG trend plot.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One sequence-epoch summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRow {
    pub sequence: String,
    pub epoch: u32,
    pub frames: usize,
    pub usable_frames: usize,
    /// The epoch's median scaled camera height.
    pub epoch_height: Option<f64>,
    /// Supervision height in effect during the epoch.
    pub supervision: Option<f64>,
    /// Supervision height after the epoch's update.
    pub hstar: Option<f64>,
    pub lambda_cam: f64,
    pub lambda_aux: f64,
    pub loss_cam: Option<f64>,
    pub loss_aux: Option<f64>,
    pub loss_sm: Option<f64>,
    /// Scheduled total of the available terms.
    pub loss_total: f64,
}

/// One frame within one epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRow {
    pub sequence: String,
    pub epoch: u32,
    pub frame: String,
    pub unscaled_height: Option<f64>,
    pub scale: Option<f64>,
    pub scaled_height: Option<f64>,
    pub objects: usize,
    pub inliers: usize,
    pub rejected: usize,
    pub status: String,
}

/// Loss terms of one frame at one schedule epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRow {
    pub sequence: String,
    pub frame: String,
    pub supervision: Option<f64>,
    pub inliers: usize,
    pub lambda_cam: f64,
    pub lambda_aux: f64,
    pub loss_cam: Option<f64>,
    pub loss_aux: Option<f64>,
    pub loss_sm: Option<f64>,
    pub loss_total: f64,
    /// Whether the static-frame filter keeps the frame; empty without images.
    pub keep: Option<bool>,
}

/// Depth metrics of one frame, or of a whole sequence when `frame` is `all`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub sequence: String,
    pub frame: String,
    /// Factor the predicted depth was multiplied by.
    pub scale: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub count: usize,
}

impl MetricsRow {
    pub fn new(sequence: &str, frame: &str, scale: f64, m: &crate::metrics::MetricsReport) -> Self {
        Self {
            sequence: sequence.to_string(),
            frame: frame.to_string(),
            scale,
            abs_rel: m.abs_rel,
            sq_rel: m.sq_rel,
            rmse: m.rmse,
            rmse_log: m.rmse_log,
            delta1: m.delta1,
            delta2: m.delta2,
            delta3: m.delta3,
            count: m.count,
        }
    }
}

pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::invalid(format!("CSV serialization failed: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::from(e).at_path(path))?;
    write_csv(std::io::BufWriter::new(file), rows).map_err(|e| e.at_path(path))
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Line plot of named `(epoch, value)` series as a standalone SVG document.
pub fn trend_svg(title: &str, series: &[(String, Vec<(u32, f64)>)]) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let points = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (u32::MAX, 0u32, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0, 1, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1;
    }
    let pad = ((y1 - y0) * 0.1).max(1e-3);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: u32| left + (x - x0) as f64 / (x1 - x0) as f64 * (w - left - right);
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            py + 4.0,
            y
        );
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{py:.1}" x2="{}" y2="{py:.1}" stroke="#ddd"/>"##,
            w - right
        );
    }
    let step = ((x1 - x0) / 10).max(1);
    for x in (x0..=x1).step_by(step as usize) {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#,
            sx(x),
            h - bottom + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        (left + w - right) / 2.0,
        h - 10.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" fill="{color}">{}</text>"#,
            w - right - 150.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_empty_options() {
        let rows = [FrameRow {
            sequence: "s".into(),
            epoch: 1,
            frame: "f0".into(),
            unscaled_height: Some(0.5),
            scale: None,
            scaled_height: None,
            objects: 3,
            inliers: 0,
            rejected: 3,
            status: "no scale".into(),
        }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "sequence,epoch,frame,unscaled_height,scale,scaled_height,objects,inliers,rejected,status"
        );
        assert_eq!(lines.next().unwrap(), "s,1,f0,0.5,,,3,0,3,no scale");
    }

    #[test]
    fn svg_is_well_formed() {
        let svg = trend_svg(
            "H* <m>",
            &[("seq".into(), vec![(1, 1.6), (2, 1.65), (3, 1.66)])],
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("H* &lt;m&gt;"));
        assert_eq!(svg.matches("<circle").count(), 3);
        let empty = trend_svg("none", &[]);
        assert!(empty.contains("</svg>"));
    }
}
