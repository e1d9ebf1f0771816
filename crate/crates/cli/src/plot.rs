//! Small raster charts for run reports: axes, quarter gridlines and data,
//! no text. The tables printed next to them carry the numbers.

use sweepkit::imgproc::{Plane, Rgb};

const WIDTH: usize = 640;
const HEIGHT: usize = 360;
const MARGIN: usize = 30;
const BACKGROUND: Rgb = [255, 255, 255];
const AXIS: Rgb = [0, 0, 0];
const GRID: Rgb = [220, 220, 220];
pub const BLUE: Rgb = [40, 90, 200];
pub const ORANGE: Rgb = [230, 120, 20];
pub const RED: Rgb = [200, 30, 30];

struct Canvas {
    plane: Plane<Rgb>,
    y_max: f64,
}

impl Canvas {
    fn new(y_max: f64) -> Self {
        let y_max = if y_max.is_finite() && y_max > 0.0 {
            y_max * 1.1
        } else {
            1.0
        };
        let mut c = Self {
            plane: Plane::new(WIDTH, HEIGHT, BACKGROUND),
            y_max,
        };
        for q in 1..=4 {
            let y = c.row(y_max * q as f64 / 4.0);
            c.hline(MARGIN, WIDTH - MARGIN, y, GRID);
        }
        c.hline(MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, AXIS);
        c.vline(MARGIN, MARGIN, HEIGHT - MARGIN, AXIS);
        c
    }

    fn row(&self, value: f64) -> usize {
        let span = (HEIGHT - 2 * MARGIN) as f64;
        let r = (HEIGHT - MARGIN) as f64 - (value / self.y_max).clamp(0.0, 1.0) * span;
        r.round() as usize
    }

    fn column(&self, fraction: f64) -> usize {
        MARGIN + (fraction.clamp(0.0, 1.0) * (WIDTH - 2 * MARGIN) as f64).round() as usize
    }

    fn hline(&mut self, x0: usize, x1: usize, y: usize, color: Rgb) {
        for x in x0..=x1.min(WIDTH - 1) {
            self.plane.set(x, y.min(HEIGHT - 1), color);
        }
    }

    fn vline(&mut self, x: usize, y0: usize, y1: usize, color: Rgb) {
        let (y0, y1) = (y0.min(y1), y0.max(y1));
        for y in y0..=y1.min(HEIGHT - 1) {
            self.plane.set(x.min(WIDTH - 1), y, color);
        }
    }
}

/// One line through `values`, evenly spaced along x.
pub fn line_chart(values: &[f64], color: Rgb) -> Plane<Rgb> {
    let mut c = Canvas::new(values.iter().copied().fold(0.0, f64::max));
    let n = values.len().max(2) - 1;
    let mut prev: Option<(usize, usize)> = None;
    for (i, &v) in values.iter().enumerate() {
        let (x, y) = (c.column(i as f64 / n as f64), c.row(v));
        if let Some((px, py)) = prev {
            // Drawn as steps so jumps stay visible.
            c.hline(px, x, py, color);
            c.vline(x, py, y, color);
        }
        prev = Some((x, y));
    }
    c.plane
}

/// A bar per entry with a whisker for the spread.
pub fn bar_chart(bars: &[(f64, f64, Rgb)]) -> Plane<Rgb> {
    let mut c = Canvas::new(bars.iter().map(|(m, s, _)| m + s).fold(0.0, f64::max));
    let slot = 1.0 / bars.len().max(1) as f64;
    for (i, &(mean, spread, color)) in bars.iter().enumerate() {
        let x0 = c.column(slot * (i as f64 + 0.2));
        let x1 = c.column(slot * (i as f64 + 0.8));
        let top = c.row(mean);
        for x in x0..=x1 {
            c.vline(x, top, HEIGHT - MARGIN - 1, color);
        }
        let mid = (x0 + x1) / 2;
        c.vline(mid, c.row(mean - spread), c.row(mean + spread), AXIS);
        c.hline(mid.saturating_sub(3), mid + 3, c.row(mean + spread), AXIS);
    }
    c.plane
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bars_are_proportional() {
        let p = bar_chart(&[(1.0, 0.0, BLUE), (2.0, 0.0, ORANGE)]);
        let height = |x: usize, color: Rgb| (0..HEIGHT).filter(|&y| p.get(x, y) == color).count();
        let a = height(WIDTH / 4, BLUE);
        let b = height(3 * WIDTH / 4, ORANGE);
        assert!(a > 0 && (b as f64 / a as f64 - 2.0).abs() < 0.02);
    }

    #[test]
    fn line_is_connected_across_steps() {
        let p = line_chart(&[0.0, 5.0, 0.0], RED);
        let x = WIDTH / 2;
        assert!((0..HEIGHT).filter(|&y| p.get(x, y) == RED).count() > 100);
    }
}
