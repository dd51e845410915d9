//! Pass/fail bookkeeping for the acceptance harness, plus independent
//! sampling oracles for planar projections.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::DVector;

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: u32,
    pub title: String,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Collects verdicts and prints each line as soon as it is recorded.
#[derive(Debug, Default)]
pub struct Report {
    verdicts: Vec<Verdict>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Times `check`, which returns `(pass, detail)`. A runtime bound, when
    /// given, is part of the verdict.
    pub fn run<F>(&mut self, id: u32, title: &str, bound: Option<Duration>, check: F)
    where
        F: FnOnce() -> (bool, String),
    {
        let clock = Instant::now();
        let (mut pass, mut detail) = check();
        let elapsed = clock.elapsed();
        if let Some(limit) = bound {
            if elapsed > limit {
                pass = false;
                let _ = write!(detail, "; runtime {:.1}s exceeds {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64());
            }
        }
        let v = Verdict {
            id,
            title: title.to_string(),
            pass,
            detail,
            elapsed,
        };
        println!("{}", v.line());
        self.verdicts.push(v);
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    pub fn failures(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| !v.pass).collect()
    }

    pub fn summary(&self) -> String {
        let failed: Vec<String> = self.failures().iter().map(|v| v.id.to_string()).collect();
        if failed.is_empty() {
            format!("acceptance: {} of {} criteria passed", self.verdicts.len(), self.verdicts.len())
        } else {
            format!(
                "acceptance: {} of {} criteria passed; failed: {}",
                self.verdicts.len() - failed.len(),
                self.verdicts.len(),
                failed.join(", ")
            )
        }
    }
}

/// Points spaced at most `spacing` apart along the closed polyline.
pub fn sample_polyline(vertices: &[[f64; 2]], spacing: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for (i, a) in vertices.iter().enumerate() {
        let b = vertices[(i + 1) % vertices.len()];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let steps = (len / spacing).ceil().max(1.0) as usize;
        for k in 0..steps {
            let t = k as f64 / steps as f64;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

/// Even-odd ray casting; points on the boundary may go either way.
pub fn polygon_contains(vertices: &[[f64; 2]], z: [f64; 2]) -> bool {
    let mut inside = false;
    let n = vertices.len();
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if (a[1] > z[1]) != (b[1] > z[1]) {
            let x = a[0] + (z[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if z[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Nearest sampled point of a closed convex polygon: `z` itself when inside,
/// else the closest boundary sample.
pub fn sampled_polygon_projection(vertices: &[[f64; 2]], z: [f64; 2], spacing: f64) -> [f64; 2] {
    if polygon_contains(vertices, z) {
        return z;
    }
    nearest_sample(&sample_polyline(vertices, spacing), z)
}

pub fn nearest_sample(samples: &[[f64; 2]], z: [f64; 2]) -> [f64; 2] {
    let mut best = (f64::INFINITY, samples[0]);
    for s in samples {
        let d = (s[0] - z[0]).powi(2) + (s[1] - z[1]).powi(2);
        if d < best.0 {
            best = (d, *s);
        }
    }
    best.1
}

/// Boundary samples of a circle, spaced at most `spacing` apart.
pub fn sample_circle(center: [f64; 2], radius: f64, spacing: f64) -> Vec<[f64; 2]> {
    let steps = (2.0 * std::f64::consts::PI * radius / spacing).ceil() as usize;
    (0..steps)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
            [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
        })
        .collect()
}

pub fn to_array(v: &DVector<f64>) -> [f64; 2] {
    [v[0], v[1]]
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
