use crate::error::{Error, Result};

/// Quadrature on the reference triangle (0,0), (1,0), (0,1). Weights sum to 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integral of `f` over the reference triangle.
    pub fn integrate<F: Fn([f64; 2]) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }
}

/// Symmetric rule exact for polynomials of total degree `degree` (1 through 6).
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule> {
    // Orbits in barycentric coordinates with weights normalized to sum 1.
    let mut pts: Vec<[f64; 3]> = Vec::new();
    let mut wts: Vec<f64> = Vec::new();
    let s3 = |a: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>| {
        let b = 1.0 - 2.0 * a;
        for p in [[b, a, a], [a, b, a], [a, a, b]] {
            pts.push(p);
            wts.push(w);
        }
    };
    match degree {
        1 => {
            pts.push([1.0 / 3.0; 3]);
            wts.push(1.0);
        }
        2 => s3(1.0 / 6.0, 1.0 / 3.0, &mut pts, &mut wts),
        3 | 4 => {
            s3(
                0.445_948_490_915_964_886_32,
                0.223_381_589_678_011_465_70,
                &mut pts,
                &mut wts,
            );
            s3(
                0.091_576_213_509_770_743_460,
                0.109_951_743_655_321_867_64,
                &mut pts,
                &mut wts,
            );
        }
        5 => {
            let r = 15f64.sqrt();
            pts.push([1.0 / 3.0; 3]);
            wts.push(0.225);
            s3((6.0 - r) / 21.0, (155.0 - r) / 1200.0, &mut pts, &mut wts);
            s3((6.0 + r) / 21.0, (155.0 + r) / 1200.0, &mut pts, &mut wts);
        }
        6 => {
            s3(
                0.249_286_745_170_910_421_29,
                0.116_786_275_726_379_366_03,
                &mut pts,
                &mut wts,
            );
            s3(
                0.063_089_014_491_502_228_340,
                0.050_844_906_370_206_816_921,
                &mut pts,
                &mut wts,
            );
            let (a, b) = (0.053_145_049_844_816_947_353, 0.310_352_451_033_784_405_42);
            let c = 1.0 - a - b;
            for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                pts.push(p);
                wts.push(0.082_851_075_618_373_575_194);
            }
        }
        _ => {
            return Err(Error::InvalidParameter(format!(
                "quadrature degree {degree} not supported (1..=6)"
            )))
        }
    }
    Ok(QuadratureRule {
        degree,
        points: pts.iter().map(|b| [b[1], b[2]]).collect(),
        weights: wts.iter().map(|w| 0.5 * w).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn monomials_exact() {
        // Integral of x^i y^j over the reference triangle is i! j! / (i + j + 2)!.
        for d in 1..=6 {
            let q = quadrature_rule(d).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 0.5).abs() < 1e-14);
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for i in 0..=d as u32 {
                for j in 0..=(d as u32 - i) {
                    let exact = factorial(i) * factorial(j) / factorial(i + j + 2);
                    let got = q.integrate(|p| p[0].powi(i as i32) * p[1].powi(j as i32));
                    assert!((got - exact).abs() < 1e-14, "deg {d} x^{i} y^{j}: {got} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn examples() {
        assert!((quadrature_rule(1).unwrap().integrate(|_| 1.0) - 0.5).abs() < 1e-15);
        assert!((quadrature_rule(2).unwrap().integrate(|p| p[0] * p[0]) - 1.0 / 12.0).abs() < 1e-15);
        let q4 = quadrature_rule(4).unwrap();
        assert!((q4.integrate(|p| (p[0] * p[1]).powi(2)) - 1.0 / 180.0).abs() < 1e-15);
        assert!(quadrature_rule(0).is_err());
        assert!(quadrature_rule(7).is_err());
    }
}
