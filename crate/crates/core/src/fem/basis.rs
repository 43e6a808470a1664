use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    P1,
    P2,
}

impl Family {
    pub fn local_dofs(self) -> usize {
        match self {
            Family::P1 => 3,
            Family::P2 => 6,
        }
    }
}

const REF_TOL: f64 = 1e-12;

/// Basis values and reference gradients at a point of the reference triangle.
///
/// P2 ordering: vertices 0, 1, 2, then midpoints of edges (0,1), (1,2), (2,0).
pub fn eval_basis(family: Family, point: [f64; 2]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    let [x, y] = point;
    if !(x >= -REF_TOL && y >= -REF_TOL && x + y <= 1.0 + REF_TOL) {
        return Err(Error::OutOfDomain(x, y));
    }
    let mut v = vec![0.0; family.local_dofs()];
    let mut g = vec![[0.0; 2]; family.local_dofs()];
    fill_basis(family, point, &mut v, &mut g);
    Ok((v, g))
}

/// Unchecked variant used in assembly loops.
pub(crate) fn fill_basis(family: Family, [x, y]: [f64; 2], v: &mut [f64], g: &mut [[f64; 2]]) {
    let l = [1.0 - x - y, x, y];
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    match family {
        Family::P1 => {
            v[..3].copy_from_slice(&l);
            g[..3].copy_from_slice(&dl);
        }
        Family::P2 => {
            for i in 0..3 {
                v[i] = l[i] * (2.0 * l[i] - 1.0);
                let c = 4.0 * l[i] - 1.0;
                g[i] = [c * dl[i][0], c * dl[i][1]];
            }
            for (k, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                v[3 + k] = 4.0 * l[a] * l[b];
                g[3 + k] = [
                    4.0 * (dl[a][0] * l[b] + l[a] * dl[b][0]),
                    4.0 * (dl[a][1] * l[b] + l[a] * dl[b][1]),
                ];
            }
        }
    }
}

/// Reference nodes of the P2 element in local ordering.
pub const P2_NODES: [[f64; 2]; 6] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];
