//! Static SVG charts: one polyline per year, colored along a rainbow so
//! early years read red and late years violet.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;

fn rainbow(frac: f64) -> String {
    // Hue from red (0) to violet (280 degrees).
    let h = 280.0 * frac.clamp(0.0, 1.0);
    format!("hsl({h:.0}, 85%, 45%)")
}

/// Write an SVG with one polyline per row of `curves` over `xs`. Non-finite
/// values break the polyline.
pub fn rainbow_svg(curves: &DMatrix<f64>, xs: &[f64], title: &str, path: &Path) -> Result<()> {
    if xs.len() != curves.ncols() || curves.is_empty() {
        return Err(Error::InvalidArgument("plot shape mismatch".into()));
    }
    let finite: Vec<f64> = curves.iter().cloned().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let (ymin, ymax) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let yspan = (ymax - ymin).max(1e-12);
    let (xmin, xmax) = (xs[0], xs[xs.len() - 1]);
    let xspan = (xmax - xmin).max(1e-12);
    let sx = |x: f64| MARGIN + (x - xmin) / xspan * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - ymin) / yspan * (HEIGHT - 2.0 * MARGIN);

    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    );
    let werr = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .map_err(werr)?;
    writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .map_err(werr)?;
    writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        title
    )
    .map_err(werr)?;
    let n = curves.nrows();
    for t in 0..n {
        let color = rainbow(if n > 1 { t as f64 / (n - 1) as f64 } else { 0.0 });
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (i, &x) in xs.iter().enumerate() {
            let v = curves[(t, i)];
            if v.is_finite() {
                segments.last_mut().unwrap().push((sx(x), sy(v)));
            } else if !segments.last().unwrap().is_empty() {
                segments.push(Vec::new());
            }
        }
        for seg in segments.iter().filter(|s| s.len() > 1) {
            let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1"/>"#,
                pts.join(" "),
                color
            )
            .map_err(werr)?;
        }
    }
    // Axis lines.
    writeln!(
        out,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    )
    .map_err(werr)?;
    writeln!(out, "</svg>").map_err(werr)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_one_polyline_per_year() {
        let dir = std::env::temp_dir().join("gfts-plot-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("chart.svg");
        let curves = DMatrix::from_fn(4, 10, |t, i| (t as f64) + (i as f64).sin());
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        rainbow_svg(&curves, &xs, "test", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<polyline").count(), 4);
        assert!(text.contains("</svg>"));
    }

    #[test]
    fn missing_cells_break_the_line() {
        let dir = std::env::temp_dir().join("gfts-plot-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("gap.svg");
        let mut curves = DMatrix::from_fn(1, 10, |_, i| i as f64);
        curves[(0, 5)] = f64::NAN;
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        rainbow_svg(&curves, &xs, "gap", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<polyline").count(), 2);
    }
}
