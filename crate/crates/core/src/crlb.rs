//! Location-domain error bounds.
//!
//! The measurement vector stacks `(theta_i, dphi_i, dtau_i)` per path and the
//! location vector is `(x_o, y_o, tau_e, phi_o, x_1, y_1, ..., x_N, y_N)`.
//! `T = dm/dd` maps a measurement FIM into the location FIM `T^T J_m T`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};
use crate::geometry::{Scene, DEFAULT_MIN_SEPARATION, SPEED_OF_LIGHT};

/// Row offsets of each measurement inside a path's 3-row block.
pub const ROW_AOD: usize = 0;
pub const ROW_DAOA: usize = 1;
pub const ROW_TDOA: usize = 2;

/// Column indices of the shared location parameters.
pub const COL_X: usize = 0;
pub const COL_Y: usize = 1;
pub const COL_CLOCK: usize = 2;
pub const COL_ORIENTATION: usize = 3;

/// Jacobian of the measurements with respect to the location parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix {
    /// `3 N_p` rows by `4 + 2 N_p` columns.
    pub matrix: DMatrix<f64>,
    pub n_paths: usize,
}

impl TransformMatrix {
    pub fn row(path: usize, measurement: usize) -> usize {
        3 * path + measurement
    }

    /// Column of reflector `path`'s x coordinate (y is the next one).
    pub fn reflector_col(path: usize) -> usize {
        4 + 2 * path
    }

    /// `N_p x 2` block of DAoA derivatives with respect to the receiver position.
    pub fn daoa_position_block(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_paths, 2, |i, j| self.matrix[(Self::row(i, ROW_DAOA), j)])
    }
}

/// Analytic Jacobian of the forward model.
pub fn transform_matrix(scene: &Scene) -> Result<TransformMatrix> {
    scene.validate(DEFAULT_MIN_SEPARATION)?;
    let n = scene.n_paths();
    let mut t = DMatrix::zeros(3 * n, 4 + 2 * n);
    let d_o = scene.rx_position;
    for (i, d_i) in scene.reflectors.iter().enumerate() {
        let to_refl = d_i - d_o;
        let r_rx = to_refl.norm();
        let r_tx = d_i.norm();
        if r_rx == 0.0 || r_tx == 0.0 {
            return Err(Error::DegenerateGeometry(format!("reflector {i} is singular")));
        }
        let ci = TransformMatrix::reflector_col(i);

        let th = TransformMatrix::row(i, ROW_AOD);
        t[(th, ci)] = -d_i.y / (r_tx * r_tx);
        t[(th, ci + 1)] = d_i.x / (r_tx * r_tx);

        let ph = TransformMatrix::row(i, ROW_DAOA);
        let r2 = r_rx * r_rx;
        t[(ph, COL_X)] = to_refl.y / r2;
        t[(ph, COL_Y)] = -to_refl.x / r2;
        t[(ph, COL_ORIENTATION)] = -1.0;
        t[(ph, ci)] = -to_refl.y / r2;
        t[(ph, ci + 1)] = to_refl.x / r2;

        let ta = TransformMatrix::row(i, ROW_TDOA);
        let u_rx = to_refl / (SPEED_OF_LIGHT * r_rx);
        let u_tx = d_i / (SPEED_OF_LIGHT * r_tx);
        t[(ta, COL_X)] = -u_rx.x;
        t[(ta, COL_Y)] = -u_rx.y;
        t[(ta, COL_CLOCK)] = -1.0;
        t[(ta, ci)] = u_rx.x + u_tx.x;
        t[(ta, ci + 1)] = u_rx.y + u_tx.y;
    }
    Ok(TransformMatrix { matrix: t, n_paths: n })
}

/// Location FIM and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationBound {
    pub fim: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    /// Receiver-position block of `covariance`.
    pub user_block: Matrix2<f64>,
}

impl LocationBound {
    /// RMS receiver position bound, meters.
    pub fn position_rms(&self) -> f64 {
        self.user_block.trace().max(0.0).sqrt()
    }
}

/// Relative eigenvalue threshold (after Jacobi scaling) below which the
/// location FIM counts as singular.
const FIM_RANK_TOL: f64 = 1e-12;

/// `J_d = T^T J_m T` and its inverse.
///
/// The FIM is Jacobi-scaled before the rank decision since its parameters mix
/// meters, seconds and radians.
pub fn location_fim(j_m: &DMatrix<f64>, t: &TransformMatrix) -> Result<LocationBound> {
    let m = &t.matrix;
    if j_m.nrows() != m.nrows() || j_m.ncols() != m.nrows() {
        return Err(Error::InvalidArgument(format!(
            "J_m is {}x{}, expected {}x{}",
            j_m.nrows(),
            j_m.ncols(),
            m.nrows(),
            m.nrows()
        )));
    }
    let fim = m.transpose() * j_m * m;
    let fim = (&fim + fim.transpose()) * 0.5;
    let dim = fim.nrows();

    let scale = DVector::from_iterator(
        dim,
        fim.diagonal()
            .iter()
            .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }),
    );
    let scaled = DMatrix::from_fn(dim, dim, |i, j| fim[(i, j)] * scale[i] * scale[j]);
    let eig = scaled.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let null: Vec<usize> = (0..dim)
        .filter(|&k| eig.eigenvalues[k] <= FIM_RANK_TOL * lmax)
        .collect();
    if !null.is_empty() || lmax <= 0.0 {
        let null_space = null
            .iter()
            .map(|&k| {
                let v = DVector::from_iterator(dim, (0..dim).map(|i| eig.eigenvectors[(i, k)] * scale[i]));
                let v = v.normalize();
                v.iter().copied().collect()
            })
            .collect();
        return Err(Error::SingularInformation {
            rank: dim - null.len(),
            dim,
            null_space,
        });
    }
    let inv_eig = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let scaled_inv = &eig.eigenvectors * inv_eig * eig.eigenvectors.transpose();
    let covariance = DMatrix::from_fn(dim, dim, |i, j| scaled_inv[(i, j)] * scale[i] * scale[j]);
    let user_block = Matrix2::new(
        covariance[(0, 0)],
        covariance[(0, 1)],
        covariance[(1, 0)],
        covariance[(1, 1)],
    );
    Ok(LocationBound {
        fim,
        covariance,
        user_block,
    })
}

/// RMS position bound under DAoA quantization alone:
/// `sqrt((pi/K)^2 / 12 * tr((T_o^T T_o)^-1))` with `T_o` the DAoA rows of
/// `dm/dd_o`.
pub fn approx_crlb(scene: &Scene, k_phi: usize) -> Result<f64> {
    if k_phi == 0 {
        return Err(Error::InvalidArgument("k_phi must be positive".into()));
    }
    let t_o = transform_matrix(scene)?.daoa_position_block();
    let gram = t_o.transpose() * &t_o;
    let g = Matrix2::new(gram[(0, 0)], gram[(0, 1)], gram[(1, 0)], gram[(1, 1)]);
    let eig = g.symmetric_eigen();
    let (lmin, lmax) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lmin > 1e-12 * lmax) {
        let rank = eig.eigenvalues.iter().filter(|&&l| l > 1e-12 * lmax).count();
        return Err(Error::DegenerateConfiguration { rank, required: 2 });
    }
    let variance = (PI / k_phi as f64).powi(2) / 12.0;
    Ok((variance * (1.0 / eig.eigenvalues[0] + 1.0 / eig.eigenvalues[1])).sqrt())
}
