//! Scalp topography frames: windowed channel means interpolated over the
//! channel triangulation.

use crate::error::{Result, ScdmError};
use crate::layout::ChannelSite;
use crate::series::EpochSet;
use serde::{Deserialize, Serialize};

/// Raster resolution (cells per axis).
pub const RASTER: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start_s: f64,
    pub end_s: f64,
}

/// The seven 2-second analysis windows spanning 3 to 17 seconds.
pub fn default_windows() -> Vec<TimeWindow> {
    (0..7)
        .map(|i| TimeWindow {
            start_s: 3.0 + 2.0 * i as f64,
            end_s: 5.0 + 2.0 * i as f64,
        })
        .collect()
}

/// Delaunay triangulation of the channel sites (Bowyer-Watson).
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub points: Vec<(f64, f64)>,
    pub triangles: Vec<[usize; 3]>,
}

fn ccw(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// d strictly inside the circumcircle of counter-clockwise (a, b, c).
fn in_circumcircle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (ax, ay) = (a.0 - d.0, a.1 - d.1);
    let (bx, by) = (b.0 - d.0, b.1 - d.1);
    let (cx, cy) = (c.0 - d.0, c.1 - d.1);
    let det = (ax * ax + ay * ay) * (bx * cy - by * cx)
        - (bx * bx + by * by) * (ax * cy - ay * cx)
        + (cx * cx + cy * cy) * (ax * by - ay * bx);
    det > 0.0
}

impl Triangulation {
    pub fn build(points: Vec<(f64, f64)>) -> Result<Self> {
        let n = points.len();
        if n < 3 {
            return Err(ScdmError::invalid("triangulation needs >= 3 sites"));
        }
        // super-triangle generously covering all sites
        let (mut lo_x, mut hi_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &points {
            lo_x = lo_x.min(x);
            hi_x = hi_x.max(x);
            lo_y = lo_y.min(y);
            hi_y = hi_y.max(y);
        }
        let span = (hi_x - lo_x).max(hi_y - lo_y).max(1e-6);
        let cx = (lo_x + hi_x) / 2.0;
        let cy = (lo_y + hi_y) / 2.0;
        let mut pts = points.clone();
        pts.push((cx - 20.0 * span, cy - 10.0 * span));
        pts.push((cx + 20.0 * span, cy - 10.0 * span));
        pts.push((cx, cy + 20.0 * span));

        let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
        for p in 0..n {
            let mut bad = Vec::new();
            for (i, t) in tris.iter().enumerate() {
                if in_circumcircle(pts[t[0]], pts[t[1]], pts[t[2]], pts[p]) {
                    bad.push(i);
                }
            }
            // boundary of the cavity = edges not shared by two bad triangles
            let mut edges: Vec<(usize, usize)> = Vec::new();
            for &i in &bad {
                let t = tris[i];
                for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                    let rev = (e.1, e.0);
                    if let Some(pos) = edges.iter().position(|&x| x == rev || x == e) {
                        edges.swap_remove(pos);
                    } else {
                        edges.push(e);
                    }
                }
            }
            for &i in bad.iter().rev() {
                tris.swap_remove(i);
            }
            for (a, b) in edges {
                let tri = if ccw(pts[a], pts[b], pts[p]) > 0.0 {
                    [a, b, p]
                } else {
                    [b, a, p]
                };
                tris.push(tri);
            }
        }
        tris.retain(|t| t.iter().all(|&v| v < n));
        if tris.is_empty() {
            return Err(ScdmError::invalid("degenerate (collinear) channel sites"));
        }
        Ok(Triangulation { points, triangles: tris })
    }

    /// Barycentric linear interpolation at (x, y); `None` outside the hull.
    /// Queries landing on a site return that site's value exactly.
    pub fn interpolate(&self, values: &[f64], x: f64, y: f64) -> Option<f64> {
        for (i, &(px, py)) in self.points.iter().enumerate() {
            if (px - x).abs() < 1e-9 && (py - y).abs() < 1e-9 {
                return Some(values[i]);
            }
        }
        for t in &self.triangles {
            let a = self.points[t[0]];
            let b = self.points[t[1]];
            let c = self.points[t[2]];
            let area = ccw(a, b, c);
            if area.abs() < 1e-18 {
                continue;
            }
            let w0 = ccw(b, c, (x, y)) / area;
            let w1 = ccw(c, a, (x, y)) / area;
            let w2 = 1.0 - w0 - w1;
            let eps = -1e-12;
            if w0 >= eps && w1 >= eps && w2 >= eps {
                return Some(w0 * values[t[0]] + w1 * values[t[1]] + w2 * values[t[2]]);
            }
        }
        None
    }
}

/// One topography frame: windowed channel means plus an interpolated
/// raster over the site hull (NaN outside).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopographyFrame {
    pub window: TimeWindow,
    pub channel_means: Vec<f64>,
    pub raster: Vec<f64>,
    pub raster_size: usize,
    /// Raster geometry: value [r][c] sits at (x0 + c*dx, y0 + r*dy).
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
}

impl TopographyFrame {
    /// Interpolated value at scalp coordinates, exact at channel sites.
    pub fn value_at(&self, tri: &Triangulation, x: f64, y: f64) -> Option<f64> {
        tri.interpolate(&self.channel_means, x, y)
    }
}

/// Per-window per-channel time means over all epochs, rasterized.
pub fn topography(
    epochs: &EpochSet,
    sites: &[ChannelSite],
    windows: &[TimeWindow],
) -> Result<(Triangulation, Vec<TopographyFrame>)> {
    if sites.len() != epochs.n_channels() {
        return Err(ScdmError::shape(format!(
            "{} sites for {} channels",
            sites.len(),
            epochs.n_channels()
        )));
    }
    let tri = Triangulation::build(sites.iter().map(|s| (s.x, s.y)).collect())?;
    let span_s = epochs.n_samples() as f64 / epochs.sample_rate;
    let (mut lo_x, mut hi_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in sites {
        lo_x = lo_x.min(s.x);
        hi_x = hi_x.max(s.x);
        lo_y = lo_y.min(s.y);
        hi_y = hi_y.max(s.y);
    }
    let dx = (hi_x - lo_x) / (RASTER - 1) as f64;
    let dy = (hi_y - lo_y) / (RASTER - 1) as f64;

    let mut frames = Vec::with_capacity(windows.len());
    for w in windows {
        if w.start_s < 0.0 || w.end_s <= w.start_s || w.end_s > span_s + 1e-9 {
            return Err(ScdmError::invalid(format!(
                "window {:.2}-{:.2}s outside epoch span 0-{span_s:.2}s",
                w.start_s, w.end_s
            )));
        }
        let i0 = (w.start_s * epochs.sample_rate).round() as usize;
        let i1 = ((w.end_s * epochs.sample_rate).round() as usize).min(epochs.n_samples());
        let norm = 1.0 / (epochs.n_trials() * (i1 - i0)) as f64;
        let mut means = vec![0.0; epochs.n_channels()];
        for t in 0..epochs.n_trials() {
            for (c, m) in means.iter_mut().enumerate() {
                *m += epochs.trial_channel(t, c)[i0..i1].iter().sum::<f64>() * norm;
            }
        }
        let mut raster = Vec::with_capacity(RASTER * RASTER);
        for r in 0..RASTER {
            for c in 0..RASTER {
                let v = tri
                    .interpolate(&means, lo_x + c as f64 * dx, lo_y + r as f64 * dy)
                    .unwrap_or(f64::NAN);
                raster.push(v);
            }
        }
        frames.push(TopographyFrame {
            window: *w,
            channel_means: means,
            raster,
            raster_size: RASTER,
            x0: lo_x,
            y0: lo_y,
            dx,
            dy,
        });
    }
    Ok((tri, frames))
}
