//! Real spherical-harmonic basis (degree 1..3, splatting sign convention) and
//! band-wise rotation of SH coefficients.

use nalgebra::{DMatrix, UnitQuaternion, Vector3};

use super::{SH_REST_LEN, SH_REST_PER_CHANNEL};

const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// The 15 non-DC basis functions evaluated at unit direction `d`.
pub fn basis_rest(d: &Vector3<f64>) -> [f64; SH_REST_PER_CHANNEL] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        -C1 * y,
        C1 * z,
        -C1 * x,
        C2[0] * x * y,
        C2[1] * y * z,
        C2[2] * (2.0 * zz - xx - yy),
        C2[3] * x * z,
        C2[4] * (xx - yy),
        C3[0] * y * (3.0 * xx - yy),
        C3[1] * x * y * z,
        C3[2] * y * (4.0 * zz - xx - yy),
        C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        C3[4] * x * (4.0 * zz - xx - yy),
        C3[5] * z * (xx - yy),
        C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// Higher-band color contribution of one channel at direction `d`.
pub fn eval_rest(coeffs: &[f64], d: &Vector3<f64>) -> f64 {
    basis_rest(d).iter().zip(coeffs).map(|(b, c)| b * c).sum()
}

const BANDS: [(usize, usize); 3] = [(0, 3), (3, 5), (8, 7)];

/// Per-band coefficient maps for a fixed rotation.
#[derive(Debug, Clone)]
pub struct ShRotation {
    bands: Vec<DMatrix<f64>>,
}

impl ShRotation {
    /// Solves `Y(R⁻¹d) = A·Y(d)` per band by least squares over a fixed
    /// direction set; the rotated coefficients are then `Aᵀc`.
    pub fn new(r: &UnitQuaternion<f64>) -> Self {
        let dirs = sample_directions(48);
        let inv = r.inverse();
        let bands = BANDS
            .iter()
            .map(|&(off, n)| {
                let mut y = DMatrix::zeros(n, dirs.len());
                let mut yr = DMatrix::zeros(n, dirs.len());
                for (j, d) in dirs.iter().enumerate() {
                    let b = basis_rest(d);
                    let br = basis_rest(&(inv * d));
                    for k in 0..n {
                        y[(k, j)] = b[off + k];
                        yr[(k, j)] = br[off + k];
                    }
                }
                let gram = &y * y.transpose();
                let a = &yr * y.transpose() * gram.try_inverse().expect("well-posed SH fit");
                a.transpose()
            })
            .collect();
        Self { bands }
    }

    pub fn apply(&self, rest: &[f64; SH_REST_LEN]) -> [f64; SH_REST_LEN] {
        let mut out = [0.0; SH_REST_LEN];
        for ch in 0..3 {
            let base = ch * SH_REST_PER_CHANNEL;
            for (m, &(off, n)) in self.bands.iter().zip(BANDS.iter()) {
                for i in 0..n {
                    out[base + off + i] = (0..n).map(|k| m[(i, k)] * rest[base + off + k]).sum();
                }
            }
        }
        out
    }
}

fn sample_directions(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_coefficients_reproduce_rotated_color() {
        let r = UnitQuaternion::from_euler_angles(0.4, -0.7, 1.9);
        let rot = ShRotation::new(&r);
        let mut rest = [0.0; SH_REST_LEN];
        for (i, v) in rest.iter_mut().enumerate() {
            *v = ((i * 7919) % 97) as f64 / 97.0 - 0.5;
        }
        let out = rot.apply(&rest);
        for d in sample_directions(20) {
            for ch in 0..3 {
                let s = ch * SH_REST_PER_CHANNEL;
                let want = eval_rest(&rest[s..s + 15], &(r.inverse() * d));
                let got = eval_rest(&out[s..s + 15], &d);
                assert!((want - got).abs() < 1e-10, "{want} vs {got}");
            }
        }
    }

    #[test]
    fn identity_rotation_is_identity() {
        let rot = ShRotation::new(&UnitQuaternion::identity());
        let mut rest = [0.0; SH_REST_LEN];
        rest[4] = 1.0;
        rest[40] = -0.25;
        let out = rot.apply(&rest);
        for (a, b) in out.iter().zip(rest.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
