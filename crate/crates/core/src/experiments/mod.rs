//! Sweep drivers for the stability-constant, conditioning, coupling, divergence,
//! inf-sup and convergence studies. Every driver returns an [`ExperimentReport`].

mod cdelta;
mod condition;
mod convergence;
mod coupling;
mod divergence;
mod infsup;
pub mod report;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::DiscreteField;
use crate::mesh::{Point, PointLocator};

pub use cdelta::{run_cdelta_sweep, CDeltaConfig, RegionShape};
pub use condition::{run_condition_sweep, ConditionAxis, ConditionConfig};
pub use convergence::{manufactured_pressure, manufactured_velocity, run_manufactured_convergence, ConvergenceConfig};
pub use coupling::{
    coupling_point, run_coupling_experiment, BandChoice, CouplingAxis, CouplingConfig, CouplingPoint, GlobalSolution,
    SUB_CENTER, SUB_RADIUS,
};
pub use divergence::{run_divergence_sweep, DivergenceConfig};
pub use infsup::{run_infsup_study, InfsupConfig};
pub use report::{Cell, ExperimentReport, RateFit, ReportMetadata, ReportRow};

/// Fits with a larger root-mean-square log residual are flagged unreliable.
pub const UNRELIABLE_RESIDUAL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainChoice {
    Square,
    Disk,
}

/// Result of a log-log least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of `ln y`.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares slope of `ln y` against `ln x`, over the points with `x` inside the
/// closed `window` when one is given.
pub fn fit_loglog_rate(points: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<LogLogFit> {
    if let Some(&(x, y)) = points
        .iter()
        .find(|(x, y)| !(*x > 0.0 && *y > 0.0) || !x.is_finite() || !y.is_finite())
    {
        return Err(Error::InvalidData(format!(
            "log-log fit needs positive finite data, got ({x}, {y})"
        )));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, _)| window.map_or(true, |(lo, hi)| *x >= lo && *x <= hi))
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = logs.len();
    if n < 3 {
        return Err(Error::InvalidData(format!(
            "log-log fit needs at least 3 points, got {n}"
        )));
    }
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidData("log-log fit needs distinct x values".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(LogLogFit {
        slope,
        intercept,
        residual: (ss / n as f64).sqrt(),
        points: n,
    })
}

/// Shape of a perturbation before scaling by `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationShape {
    None,
    /// `cos(omega x1 x2) / scale`.
    CosProduct {
        omega: f64,
        scale: f64,
    },
}

impl PerturbationShape {
    pub fn value(&self, x: Point) -> f64 {
        match *self {
            PerturbationShape::None => 0.0,
            PerturbationShape::CosProduct { omega, scale } => (omega * x[0] * x[1]).cos() / scale,
        }
    }
}

/// Additive perturbation of boundary data. Both velocity components receive the same
/// scalar shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub delta: f64,
    pub velocity: PerturbationShape,
    pub pressure: PerturbationShape,
}

/// Samples per side of the grid used to normalize the coupling perturbation.
const NORMALIZATION_GRID: usize = 512;

impl PerturbationSpec {
    pub fn new(delta: f64, velocity: PerturbationShape, pressure: PerturbationShape) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "perturbation magnitude {delta} must be >= 0"
            )));
        }
        Ok(PerturbationSpec {
            delta,
            velocity,
            pressure,
        })
    }

    /// `delta cos(4 pi x1 x2) / max |cos(4 pi x1 x2)|` on all of `u1`, `u2`, `p`, the
    /// maximum taken over a sample grid of the disk.
    pub fn coupling(delta: f64, center: Point, radius: f64) -> Result<Self> {
        let omega = 4.0 * PI;
        let n = NORMALIZATION_GRID;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = center[0] - radius + 2.0 * radius * i as f64 / (n - 1) as f64;
                let y = center[1] - radius + 2.0 * radius * j as f64 / (n - 1) as f64;
                if (x - center[0]).hypot(y - center[1]) <= radius {
                    scale = scale.max((omega * x * y).cos().abs());
                }
            }
        }
        let shape = PerturbationShape::CosProduct { omega, scale };
        Self::new(delta, shape, shape)
    }

    /// `delta cos(2 pi x1 x2)` on the pressure only.
    pub fn divergence(delta: f64) -> Result<Self> {
        let shape = PerturbationShape::CosProduct {
            omega: 2.0 * PI,
            scale: 1.0,
        };
        Self::new(delta, PerturbationShape::None, shape)
    }

    pub fn perturb_velocity(&self, x: Point, base: [f64; 2]) -> [f64; 2] {
        if self.delta == 0.0 || self.velocity == PerturbationShape::None {
            return base;
        }
        let d = self.delta * self.velocity.value(x);
        [base[0] + d, base[1] + d]
    }

    pub fn perturb_pressure(&self, x: Point, base: f64) -> f64 {
        if self.delta == 0.0 || self.pressure == PerturbationShape::None {
            return base;
        }
        base + self.delta * self.pressure.value(x)
    }
}

/// Point evaluation of a field (scalar values in slot 0); NaN outside the mesh.
fn evaluator(field: &DiscreteField) -> impl Fn(Point) -> [f64; 2] + Send + Sync + 'static {
    let field = field.clone();
    let locator = PointLocator::new(field.mesh());
    move |x| {
        locator
            .locate(field.mesh(), x)
            .map_or([f64::NAN; 2], |(t, bary)| field.eval_in(t, bary))
    }
}

/// Runs independent grid points on the current rayon pool; results keep grid order.
fn grid_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_examples() {
        let xs = [1e-3, 1e-2, 1e-1, 1.0, 10.0];
        let lin: Vec<_> = xs.iter().map(|&x| (x, x)).collect();
        let f = fit_loglog_rate(&lin, None).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && f.residual < 1e-12 && f.points == 5);
        let root: Vec<_> = xs[..4].iter().map(|&x| (x, x.sqrt())).collect();
        assert!((fit_loglog_rate(&root, None).unwrap().slope - 0.5).abs() < 1e-12);
        let flat: Vec<_> = xs.iter().map(|&x| (x, 3.0)).collect();
        assert!(fit_loglog_rate(&flat, None).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn fit_window_and_errors() {
        let pts: Vec<_> = [1e-4, 1e-3, 1e-2, 1e-1, 1.0]
            .iter()
            .map(|&x: &f64| (x, if x < 5e-3 { 1.0 } else { x }))
            .collect();
        let f = fit_loglog_rate(&pts, Some((1e-2, 1.0))).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(fit_loglog_rate(&pts, Some((1e-4, 1e-3))).is_err());
        assert!(fit_loglog_rate(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)], None).is_err());
        assert!(fit_loglog_rate(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)], None).is_err());
        let noisy = [(1.0, 1.0), (2.0, 8.0), (4.0, 1.0), (8.0, 8.0)];
        assert!(fit_loglog_rate(&noisy, None).unwrap().residual > UNRELIABLE_RESIDUAL);
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let p = PerturbationSpec::coupling(0.0, [0.5, 0.5], 0.2).unwrap();
        let base = [0.1 + 0.2, -0.0];
        let out = p.perturb_velocity([0.4, 0.6], base);
        assert_eq!(out[0].to_bits(), base[0].to_bits());
        assert_eq!(out[1].to_bits(), base[1].to_bits());
        assert_eq!(p.perturb_pressure([0.4, 0.6], -0.0).to_bits(), (-0.0f64).to_bits());
        assert!(PerturbationSpec::divergence(-1.0).is_err());
    }

    #[test]
    fn coupling_normalization() {
        // 4 pi x1 x2 reaches pi inside the subdomain, so the max of |cos| is 1 to grid accuracy.
        let p = PerturbationSpec::coupling(2.0, [0.5, 0.5], 0.2).unwrap();
        let PerturbationShape::CosProduct { scale, .. } = p.velocity else {
            panic!("unexpected shape");
        };
        assert!(scale <= 1.0 && scale > 1.0 - 1e-4);
        let v = p.perturb_velocity([0.5, 0.5], [1.0, 0.0]);
        let c = 2.0 * (PI).cos() / scale;
        assert!((v[0] - (1.0 + c)).abs() < 1e-15 && (v[1] - c).abs() < 1e-15);
        let d = PerturbationSpec::divergence(2.0).unwrap();
        assert_eq!(d.perturb_velocity([0.3, 0.3], [1.0, 2.0]), [1.0, 2.0]);
        assert!((d.perturb_pressure([0.5, 0.5], 1.0) - (1.0 + 2.0 * (0.5 * PI).cos())).abs() < 1e-15);
    }
}
