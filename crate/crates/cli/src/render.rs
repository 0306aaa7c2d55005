//! Raster output: flat-shaded field maps and simple line charts, written as
//! binary PGM and as PNG.
//!
//! Field maps use a linear grey ramp: the minimum maps to 0 (black), the
//! maximum to 255 (white), and a constant field to mid grey.

use std::io::Write;

use font8x8::legacy::BASIC_LEGACY;
use mre_core::TriMesh;

use crate::error::Result;

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const BLACK: Rgb = [0, 0, 0];
const GRID: Rgb = [220, 220, 220];
const PALETTE: [Rgb; 4] = [[200, 30, 30], [30, 80, 200], [20, 150, 60], [150, 60, 170]];

/// Side of the square area the field is drawn on.
pub const FIELD_SIZE: usize = 512;
const LEGEND_WIDTH: usize = 160;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    pub fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: Rgb) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.set(xx, yy, c);
            }
        }
    }

    /// Bresenham line.
    pub fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.set(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    /// Draws ASCII text with the 8x8 bitmap font; `scale` enlarges each dot.
    pub fn text(&mut self, x: i64, y: i64, s: &str, c: Rgb, scale: i64) {
        for (k, ch) in s.chars().enumerate() {
            let glyph = BASIC_LEGACY[if ch.is_ascii() {
                ch as usize
            } else {
                b'?' as usize
            }];
            let ox = x + 8 * scale * k as i64;
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..8 {
                    if bits & (1 << col) != 0 {
                        self.fill_rect(ox + col * scale, y + row as i64 * scale, scale, scale, c);
                    }
                }
            }
        }
    }

    /// Width in pixels of `s` at the given scale.
    pub fn text_width(s: &str, scale: i64) -> i64 {
        8 * scale * s.chars().count() as i64
    }

    fn luma(c: Rgb) -> u8 {
        let [r, g, b] = c.map(u32::from);
        ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
    }

    /// Binary greyscale PGM with an optional comment line.
    pub fn to_pgm(&self, comment: Option<&str>) -> Vec<u8> {
        let mut out = b"P5\n".to_vec();
        if let Some(c) = comment {
            out.extend_from_slice(format!("# {c}\n").as_bytes());
        }
        out.extend_from_slice(format!("{} {}\n255\n", self.width, self.height).as_bytes());
        out.extend(self.pixels.iter().map(|&p| Self::luma(p)));
        out
    }

    /// RGB PNG; the comment is stored in a `Comment` text chunk.
    pub fn write_png<W: Write>(&self, w: W, comment: Option<&str>) -> Result<()> {
        let mut enc = png::Encoder::new(w, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        if let Some(c) = comment {
            enc.add_text_chunk("Comment".into(), c.into())?;
        }
        let mut writer = enc.write_header()?;
        let data: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        writer.write_image_data(&data)?;
        writer.finish()?;
        Ok(())
    }
}

fn grey(v: f64, lo: f64, hi: f64) -> Rgb {
    let g = if hi > lo {
        (255.0 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).round() as u8
    } else {
        128
    };
    [g; 3]
}

fn fmt_value(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

/// Per-element flat shading of `values` onto the field square, with a grey
/// bar legend giving the value range and `unit`. Elements with non-finite
/// values are left white. The range defaults to the finite min and max.
pub fn render_field(
    mesh: &TriMesh,
    values: &[f64],
    unit: &str,
    range: Option<(f64, f64)>,
) -> Canvas {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = range.unwrap_or_else(|| {
        finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        })
    });
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };

    let n = FIELD_SIZE;
    let mut canvas = Canvas::new(n + LEGEND_WIDTH, n, WHITE);
    let ([x0, y0], [x1, y1]) = mesh.bounds();
    let (w, h) = (x1 - x0, y1 - y0);
    // Pixel centre to physical coordinates, y pointing up.
    let px = |i: usize| x0 + (i as f64 + 0.5) / n as f64 * w;
    let py = |j: usize| y1 - (j as f64 + 0.5) / n as f64 * h;
    let to_col = |x: f64| ((x - x0) / w * n as f64 - 0.5).floor().max(0.0) as usize;
    let to_row = |y: f64| ((y1 - y) / h * n as f64 - 0.5).floor().max(0.0) as usize;

    for (e, &v) in values.iter().enumerate().take(mesh.element_count()) {
        if !v.is_finite() {
            continue;
        }
        let c = grey(v, lo, hi);
        let [a, b, d] = mesh.element_coords(e);
        let area2 = (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]);
        let xmin = a[0].min(b[0]).min(d[0]);
        let xmax = a[0].max(b[0]).max(d[0]);
        let ymin = a[1].min(b[1]).min(d[1]);
        let ymax = a[1].max(b[1]).max(d[1]);
        let tol = -1e-12 * area2.abs();
        for j in to_row(ymax)..=to_row(ymin).min(n - 1) {
            for i in to_col(xmin)..=to_col(xmax).min(n - 1) {
                let p = [px(i), py(j)];
                let edge = |s: [f64; 2], t: [f64; 2]| {
                    ((t[0] - s[0]) * (p[1] - s[1]) - (p[0] - s[0]) * (t[1] - s[1])) * area2.signum()
                };
                if edge(a, b) >= tol && edge(b, d) >= tol && edge(d, a) >= tol {
                    canvas.set(i as i64, j as i64, c);
                }
            }
        }
    }

    // Legend: bar from max (top) to min (bottom).
    let (bar_x, bar_top, bar_h) = (n as i64 + 20, 60i64, 392i64);
    canvas.text(n as i64 + 12, 20, unit, BLACK, 1);
    for k in 0..bar_h {
        let v = hi - (hi - lo) * k as f64 / (bar_h - 1) as f64;
        canvas.fill_rect(bar_x, bar_top + k, 24, 1, grey(v, lo, hi));
    }
    canvas.line((bar_x - 1, bar_top - 1), (bar_x + 24, bar_top - 1), BLACK);
    canvas.line(
        (bar_x - 1, bar_top + bar_h),
        (bar_x + 24, bar_top + bar_h),
        BLACK,
    );
    canvas.line(
        (bar_x - 1, bar_top - 1),
        (bar_x - 1, bar_top + bar_h),
        BLACK,
    );
    canvas.line(
        (bar_x + 24, bar_top - 1),
        (bar_x + 24, bar_top + bar_h),
        BLACK,
    );
    canvas.text(bar_x + 30, bar_top - 4, "max", BLACK, 1);
    canvas.text(bar_x + 30, bar_top + 6, &fmt_value(hi), BLACK, 1);
    canvas.text(bar_x + 30, bar_top + bar_h - 14, "min", BLACK, 1);
    canvas.text(bar_x + 30, bar_top + bar_h - 4, &fmt_value(lo), BLACK, 1);
    canvas
}

/// One named polyline for [`line_plot`].
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart on a 640x480 canvas with a log-scaled x axis when `log_x`.
/// Non-finite points (and non-positive x on a log axis) are skipped.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_x: bool,
) -> Canvas {
    let (width, height) = (640i64, 480i64);
    let mut canvas = Canvas::new(width as usize, height as usize, WHITE);
    let (left, right, top, bottom) = (80i64, 600i64, 50i64, 410i64);

    let tx = |x: f64| if log_x { x.log10() } else { x };
    let usable = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!log_x || x > 0.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied().filter(usable))
        .collect();
    let (mut xmin, mut xmax) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(tx(p.0)), b.max(tx(p.0)))
        });
    if !xmin.is_finite() {
        (xmin, xmax) = (0.0, 1.0);
    }
    if xmax <= xmin {
        (xmin, xmax) = (xmin - 0.5, xmax + 0.5);
    }
    let ymax = pts.iter().fold(0.0f64, |m, p| m.max(p.1));
    let ymax = if ymax > 0.0 { ymax * 1.1 } else { 1.0 };
    let ymin = pts.iter().fold(0.0f64, |m, p| m.min(p.1));

    let sx =
        |x: f64| left + ((tx(x) - xmin) / (xmax - xmin) * (right - left) as f64).round() as i64;
    let sy = |y: f64| bottom - ((y - ymin) / (ymax - ymin) * (bottom - top) as f64).round() as i64;

    // Grid and y ticks.
    for k in 0..=5 {
        let y = ymin + (ymax - ymin) * k as f64 / 5.0;
        let yy = sy(y);
        canvas.line((left, yy), (right, yy), GRID);
        let label = fmt_value(y);
        canvas.text(
            left - 8 - Canvas::text_width(&label, 1),
            yy - 4,
            &label,
            BLACK,
            1,
        );
    }
    // x ticks at the data abscissae of the first series.
    if let Some(first) = series.first() {
        for &(x, _) in first.points.iter().filter(|p| !log_x || p.0 > 0.0) {
            let xx = sx(x);
            canvas.line((xx, top), (xx, bottom), GRID);
            canvas.line((xx, bottom), (xx, bottom + 4), BLACK);
            let label = format!("{x}");
            canvas.text(
                xx - Canvas::text_width(&label, 1) / 2,
                bottom + 8,
                &label,
                BLACK,
                1,
            );
        }
    }
    canvas.line((left, top), (left, bottom), BLACK);
    canvas.line((left, bottom), (right, bottom), BLACK);

    canvas.text(
        (width - Canvas::text_width(title, 2)) / 2,
        12,
        title,
        BLACK,
        2,
    );
    let xl = if log_x {
        format!("{x_label} (log scale)")
    } else {
        x_label.to_string()
    };
    canvas.text(
        (left + right - Canvas::text_width(&xl, 1)) / 2,
        bottom + 26,
        &xl,
        BLACK,
        1,
    );
    canvas.text(8, top - 20, y_label, BLACK, 1);

    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let p: Vec<(i64, i64)> = s
            .points
            .iter()
            .copied()
            .filter(usable)
            .map(|(x, y)| (sx(x), sy(y)))
            .collect();
        for w in p.windows(2) {
            canvas.line(w[0], w[1], c);
            canvas.line((w[0].0, w[0].1 + 1), (w[1].0, w[1].1 + 1), c);
        }
        for &(x, y) in &p {
            canvas.fill_rect(x - 3, y - 3, 7, 7, c);
        }
        let ly = height - 28;
        let lx = left + 150 * k as i64;
        canvas.fill_rect(lx, ly, 12, 8, c);
        canvas.text(lx + 16, ly, &s.name, BLACK, 1);
    }
    canvas
}

#[cfg(test)]
mod tests {
    use super::*;
    use mre_core::mesh::build_mesh;
    use mre_core::PhantomSpec;

    fn two_element_mesh() -> TriMesh {
        build_mesh(&PhantomSpec {
            nx: 1,
            ny: 1,
            ..PhantomSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn flat_shading_splits_along_diagonal() {
        // Element 0 is the lower-right triangle, element 1 the upper-left.
        let c = render_field(&two_element_mesh(), &[1.0, 2.0], "unit", None);
        assert_eq!(
            (c.width(), c.height()),
            (FIELD_SIZE + LEGEND_WIDTH, FIELD_SIZE)
        );
        assert_eq!(c.get(500, 500), [0; 3]);
        assert_eq!(c.get(10, 10), [255; 3]);
        // No uncovered pixels inside the square.
        for j in 0..FIELD_SIZE {
            for i in 0..FIELD_SIZE {
                let p = c.get(i, j);
                assert!(p == [0; 3] || p == [255; 3], "gap at {i},{j}");
            }
        }
    }

    #[test]
    fn constant_field_is_mid_grey() {
        let c = render_field(&two_element_mesh(), &[0.46, 0.46], "100 kPa", None);
        assert_eq!(c.get(256, 100), [128; 3]);
    }

    #[test]
    fn pgm_layout() {
        let mut c = Canvas::new(3, 2, WHITE);
        c.set(0, 0, BLACK);
        c.set(2, 1, [255, 0, 0]);
        let pgm = c.to_pgm(Some("config=x seed=1"));
        let header = b"P5\n# config=x seed=1\n3 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(&pgm[header.len()..], &[0, 255, 255, 255, 255, 76]);
    }

    #[test]
    fn png_encodes() {
        let c = Canvas::new(4, 4, WHITE);
        let mut buf = Vec::new();
        c.write_png(&mut buf, Some("hello")).unwrap();
        assert_eq!(&buf[1..4], b"PNG");
    }

    #[test]
    fn plot_skips_non_finite_points() {
        let s = Series {
            name: "a".into(),
            points: vec![(0.01, 1.0), (0.1, f64::INFINITY), (0.2, 2.0), (0.0, 1.0)],
        };
        let c = line_plot("t", "x", "y", &[s], true);
        assert_eq!((c.width(), c.height()), (640, 480));
    }
}
