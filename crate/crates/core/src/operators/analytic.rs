//! `C_Delta` ratios of closed-form test functions on the unit disk, evaluated by
//! polar quadrature so that `|Delta|` can go far below mesh resolution.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ratio_from_moments, weighted_moments};
use crate::error::{Error, Result};
use crate::mesh::Point;

/// The five pressure test functions (before `P` is applied).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    /// `10^6`
    P1,
    /// `10^-6`
    P2,
    /// `7 exp(-10 |x|^2)`
    P3,
    /// `((x1 - 0.2)^2 + (x2 - 0.2)^2)^{3/2}`
    P4,
    /// `T sin(2 pi x1 x2)`
    P5,
}

impl TestFunction {
    pub const ALL: [TestFunction; 5] = [
        TestFunction::P1,
        TestFunction::P2,
        TestFunction::P3,
        TestFunction::P4,
        TestFunction::P5,
    ];

    pub fn id(self) -> &'static str {
        match self {
            TestFunction::P1 => "p1",
            TestFunction::P2 => "p2",
            TestFunction::P3 => "p3",
            TestFunction::P4 => "p4",
            TestFunction::P5 => "p5",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| Error::Parse(format!("unknown test function {s:?}")))
    }

    /// The function without the domain mean subtraction of `p5`.
    pub fn raw(self, x: Point) -> f64 {
        match self {
            TestFunction::P1 => 1e6,
            TestFunction::P2 => 1e-6,
            TestFunction::P3 => 7.0 * (-10.0 * (x[0] * x[0] + x[1] * x[1])).exp(),
            TestFunction::P4 => {
                let d2 = (x[0] - 0.2).powi(2) + (x[1] - 0.2).powi(2);
                d2 * d2.sqrt()
            }
            TestFunction::P5 => (2.0 * PI * x[0] * x[1]).sin(),
        }
    }

    pub fn is_radial(self) -> bool {
        matches!(self, TestFunction::P1 | TestFunction::P2 | TestFunction::P3)
    }

    pub fn subtracts_mean(self) -> bool {
        self == TestFunction::P5
    }
}

/// Region `Delta` inside the unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DiskRegion {
    /// `|x| < radius`.
    Central { radius: f64 },
    /// `1 - width < |x| < 1`.
    Ring { width: f64 },
}

impl DiskRegion {
    pub fn volume(&self) -> f64 {
        match *self {
            DiskRegion::Central { radius } => PI * radius * radius,
            DiskRegion::Ring { width } => PI * width * (2.0 - width),
        }
    }

    /// Region of a prescribed volume.
    pub fn central_with_volume(v: f64) -> Self {
        DiskRegion::Central {
            radius: (v / PI).sqrt(),
        }
    }

    pub fn ring_with_volume(v: f64) -> Self {
        // w (2 - w) = v / pi, smaller root written without cancellation.
        let s = v / PI;
        DiskRegion::Ring {
            width: s / (1.0 + (1.0 - s).sqrt()),
        }
    }

    /// Radial extent of `Omega \ Delta`.
    fn complement(&self) -> Result<(f64, f64)> {
        match *self {
            DiskRegion::Central { radius } if radius > 0.0 && radius < 1.0 => Ok((radius, 1.0)),
            DiskRegion::Ring { width } if width > 0.0 && width < 1.0 => Ok((0.0, 1.0 - width)),
            _ => Err(Error::InvalidParameter(format!(
                "region {self:?} not inside the unit disk"
            ))),
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            DiskRegion::Central { radius } => 2.0 * radius,
            DiskRegion::Ring { width } => width,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (p, pm) = if n == 1 { (z, 1.0) } else { (p1, p0) };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

const GL_ORDER: usize = 16;
const THETA_POINTS: usize = 1024;
/// Radius of the point (0.2, 0.2), where `p4` is not smooth.
const P4_KINK: f64 = 0.282_842_712_474_619_01;

/// Polar quadrature nodes `(point, weight)` on the annulus `a < r < b`.
fn annulus_nodes(a: f64, b: f64, radial_only: bool) -> Vec<(Point, f64)> {
    let mut breaks = vec![a];
    if a > 0.0 {
        let mut r = a;
        while r * 4.0 < 0.05_f64.min(b) {
            r *= 4.0;
            breaks.push(r);
        }
    }
    let mut r = 0.05;
    while r < b {
        if r > *breaks.last().unwrap() {
            breaks.push(r);
        }
        r += 0.05;
    }
    if P4_KINK > a && P4_KINK < b {
        breaks.push(P4_KINK);
    }
    breaks.push(b);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * y.abs().max(1e-300));
    let (gx, gw) = gauss_legendre(GL_ORDER);
    let nt = if radial_only { 1 } else { THETA_POINTS };
    let dtheta = 2.0 * PI / nt as f64;
    let mut nodes = Vec::new();
    for win in breaks.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let half = 0.5 * (hi - lo);
        for (x, w) in gx.iter().zip(&gw) {
            let r = lo + half * (x + 1.0);
            let wr = w * half * r * dtheta;
            for k in 0..nt {
                let t = k as f64 * dtheta;
                nodes.push(([r * t.cos(), r * t.sin()], wr));
            }
        }
    }
    nodes
}

/// Mean of a test function over the unit disk (used by `p5`).
pub fn disk_mean(f: TestFunction) -> f64 {
    let nodes = annulus_nodes(0.0, 1.0, f.is_radial());
    let (s, a) = nodes
        .iter()
        .fold((0.0, 0.0), |(s, a), (p, w)| (s + w * f.raw(*p), a + w));
    s / a
}

/// `||T P f|| / ||P f||` on the unit disk for `Delta` given by `region`.
pub fn analytic_ratio(f: TestFunction, region: DiskRegion) -> Result<f64> {
    let (a, b) = region.complement()?;
    let nodes = annulus_nodes(a, b, f.is_radial());
    let shift = if f.subtracts_mean() { disk_mean(f) } else { 0.0 };
    let vals: Vec<(f64, f64)> = nodes.iter().map(|(p, w)| (*w, f.raw(*p) - shift)).collect();
    let vol_rest: f64 = vals.iter().map(|v| v.0).sum();
    let (fbar, variance) = weighted_moments(&vals, vol_rest);
    Ok(ratio_from_moments(variance, fbar, region.volume(), vol_rest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exactness() {
        for n in [1, 2, 5, 16] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for k in 0..2 * n {
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((got - exact).abs() < 1e-13, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn constants_follow_volume_law() {
        for v in [1e-1, 1e-4, 1e-10, 1e-20] {
            for region in [DiskRegion::central_with_volume(v), DiskRegion::ring_with_volume(v)] {
                assert!((region.volume() - v).abs() <= 1e-14 * v);
                for f in [TestFunction::P1, TestFunction::P2] {
                    let r = analytic_ratio(f, region).unwrap();
                    let exact = (v / PI).sqrt();
                    assert!((r - exact).abs() <= 1e-10 * exact, "{f:?} {region:?} {r} {exact}");
                }
            }
        }
    }

    #[test]
    fn gaussian_closed_form() {
        // p3 with Delta = disk of radius rho: all moments are elementary.
        let rho: f64 = 0.3;
        let i1 = 7.0 * PI / 10.0 * ((-10.0 * rho * rho).exp() - (-10.0f64).exp());
        let i2 = 49.0 * PI / 20.0 * ((-20.0 * rho * rho).exp() - (-20.0f64).exp());
        let m = i1 / PI;
        let rest = PI * (1.0 - rho * rho);
        let num = i2 - 2.0 * m * i1 + m * m * rest + PI * rho * rho * m * m;
        let exact = (num / i2).sqrt();
        let got = analytic_ratio(TestFunction::P3, DiskRegion::Central { radius: rho }).unwrap();
        assert!((got - exact).abs() < 1e-12, "{got} {exact}");
    }

    #[test]
    fn p5_mean_vanishes_on_disk() {
        assert!(disk_mean(TestFunction::P5).abs() < 1e-14);
    }

    #[test]
    fn invalid_regions() {
        assert!(analytic_ratio(TestFunction::P1, DiskRegion::Central { radius: 1.5 }).is_err());
        assert!(analytic_ratio(TestFunction::P1, DiskRegion::Ring { width: 0.0 }).is_err());
        assert_eq!(TestFunction::parse("p4").unwrap(), TestFunction::P4);
        assert!(TestFunction::parse("p9").is_err());
    }
}
