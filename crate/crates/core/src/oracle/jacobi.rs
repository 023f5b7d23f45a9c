use nalgebra::DMatrix;

use super::registry::Eigensolver;
use crate::error::{Error, Result};

/// Cyclic Jacobi rotations. Slow (O(N³) per sweep) but independent of the
/// tridiagonal path, which makes it a useful cross-check at small N.
#[derive(Debug, Clone, Copy)]
pub struct CyclicJacobi {
    pub max_sweeps: usize,
}

impl Default for CyclicJacobi {
    fn default() -> Self {
        Self { max_sweeps: 60 }
    }
}

fn off_norm_sq(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..j {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s
}

impl Eigensolver for CyclicJacobi {
    fn name(&self) -> &'static str {
        "jacobi"
    }

    fn eigen(&self, mut a: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = a.nrows();
        let mut v = DMatrix::<f64>::identity(n, n);
        let scale = a.iter().map(|x| x * x).sum::<f64>();
        let target = (f64::EPSILON * f64::EPSILON) * scale;
        let mut sweeps = 0;
        while off_norm_sq(&a) > target {
            if sweeps == self.max_sweeps {
                return Err(Error::NonContraction(format!(
                    "Jacobi did not converge in {} sweeps",
                    self.max_sweeps
                )));
            }
            sweeps += 1;
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        Ok(((0..n).map(|i| a[(i, i)]).collect(), v))
    }
}
