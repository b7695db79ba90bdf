//! Gradient-field dumps over a 2-D grid.

use std::path::Path;
use std::str::FromStr;

use fguide_core::guidance::{base_guidance_grad, guidance_grad, GuidanceKind, GuidanceSpec};
use fguide_core::LogitModel;

use crate::error::{CliError, CliResult};

/// Axis-aligned bounding box sampled at `nx × ny` points, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    fn axis(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
    }

    /// Grid points, `x1` varying fastest.
    pub fn points(&self) -> Vec<[f64; 2]> {
        Self::axis(self.ymin, self.ymax, self.ny)
            .flat_map(|y| Self::axis(self.xmin, self.xmax, self.nx).map(move |x| [x, y]))
            .collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    /// Parses `xmin,xmax,ymin,ymax,nx,ny`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(format!("expected xmin,xmax,ymin,ymax,nx,ny, got `{s}`"));
        }
        let f = |i: usize| {
            parts[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("bad bound `{}`", parts[i]))
        };
        let n = |i: usize| {
            parts[i]
                .parse::<usize>()
                .ok()
                .filter(|v| *v > 0)
                .ok_or_else(|| format!("bad resolution `{}`", parts[i]))
        };
        let grid = Grid {
            xmin: f(0)?,
            xmax: f(1)?,
            ymin: f(2)?,
            ymax: f(3)?,
            nx: n(4)?,
            ny: n(5)?,
        };
        if grid.xmin > grid.xmax || grid.ymin > grid.ymax {
            return Err("grid bounds must satisfy min <= max".into());
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldRow {
    pub x: [f64; 2],
    pub g: [f64; 2],
    /// Total coefficient of `∇f_i` in `g`, so that `g = Σ_i w_i ∇f_i`.
    pub weights: Vec<f64>,
}

/// Guidance gradient of `spec.kind` for class `y` at every grid point;
/// `lambda` is the entropy weight.
pub fn gradient_field<M: LogitModel + ?Sized>(
    model: &M,
    spec: &GuidanceSpec,
    grid: &Grid,
    y: usize,
    lambda: f64,
) -> CliResult<Vec<FieldRow>> {
    if model.input_dim() != 2 {
        return Err(CliError::Config(format!(
            "gradient fields need a 2-D model, got dimension {}",
            model.input_dim()
        )));
    }
    spec.validate()?;
    let scale = match spec.kind {
        GuidanceKind::None => 0.0,
        GuidanceKind::Entropy => lambda,
        _ => spec.alpha,
    };
    grid.points()
        .into_iter()
        .map(|x| {
            let grad = guidance_grad(model, &x, y, spec, lambda)?;
            let base = base_guidance_grad(model, &x, y, spec.tau1, spec.tau2)?;
            let weights = if spec.kind == GuidanceKind::None {
                base.class_weights
            } else {
                let total: f64 = grad.class_weights.iter().sum();
                base.class_weights
                    .iter()
                    .zip(&grad.class_weights)
                    .zip(&grad.probs)
                    .map(|((b, w), p)| b - scale * (w - total * p))
                    .collect()
            };
            Ok(FieldRow {
                x,
                g: [grad.value[0], grad.value[1]],
                weights,
            })
        })
        .collect()
}

pub fn write_field(path: &Path, rows: &[FieldRow]) -> CliResult<()> {
    let k = rows.first().map_or(0, |r| r.weights.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["x1", "x2", "g1", "g2"].iter().map(|s| s.to_string()).collect();
    header.extend((0..k).map(|i| format!("w_{i}")));
    w.write_record(&header)?;
    for r in rows {
        let record: Vec<String> = r
            .x
            .iter()
            .chain(&r.g)
            .chain(&r.weights)
            .map(|v| v.to_string())
            .collect();
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
