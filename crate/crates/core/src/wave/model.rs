//! Damped 1D wave equation `z_tt = −ε z_t + z_xx + Σ b_i u_i` on `[0, 1]`,
//! observed through `y_i = ∫ c_i z dx + w_i`, discretized by P1 elements in
//! space and implicit Euler in time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fem::{assemble_fem, interpolation_embedding, load_vector, FemMesh1D};
use crate::error::{Error, Result};
use crate::lgss::LgssModel;
use crate::linalg::{
    gram_orthonormalize, orthogonal_projection, spd_inverse, symmetrize, CoordinateMap, ProjectionPair, PsdMatrix,
};
use crate::scalar::{lit, Real};

/// Input profiles `b₁, b₂, b₃`.
pub fn input_profiles() -> [fn(f64) -> f64; 3] {
    [
        |x| (1.0 - x) * (std::f64::consts::PI * x).sin(),
        |x| 7.0 * x * x * (1.0 - x),
        |x| {
            if x == 0.0 {
                0.0
            } else {
                (6.0 * std::f64::consts::PI * x).sin().powi(2) / x
            }
        },
    ]
}

/// Output profiles `c₁, c₂`.
pub fn output_profiles() -> [fn(f64) -> f64; 2] {
    [|x| 1.4 / (x + 1.0).powf(0.7), |x| 1.0 / (2.0 - x).powf(0.3)]
}

/// Where the sampled input enters the implicit Euler step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePlacement {
    /// `x_k = (I − ΔtA_c)⁻¹ x_{k-1} + B_d u_k`.
    Direct,
    /// `x_k = (I − ΔtA_c)⁻¹ (x_{k-1} + B_d u_k)`.
    Resolvent,
}

fn default_u() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.25]]
}

fn default_r() -> Vec<Vec<f64>> {
    vec![vec![0.3, 0.0], vec![0.0, 0.15]]
}

/// Benchmark parameters; defaults are the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveParams {
    pub dt: f64,
    pub eps: f64,
    pub u_cov: Vec<Vec<f64>>,
    pub r_cov: Vec<Vec<f64>>,
    pub n_f: usize,
    pub n_c: usize,
    pub burn_in: usize,
    /// Steps after the burn-in over which errors are averaged.
    pub eval_steps: usize,
    pub n_sims: usize,
    pub noise_placement: NoisePlacement,
    /// Initial covariance `S₀ = s0_scale·I` in orthonormal coordinates.
    pub s0_scale: f64,
}

impl Default for WaveParams {
    fn default() -> Self {
        Self {
            dt: 0.01,
            eps: 0.4,
            u_cov: default_u(),
            r_cov: default_r(),
            n_f: 65,
            n_c: 5,
            burn_in: 2000,
            eval_steps: 1000,
            n_sims: 500,
            noise_placement: NoisePlacement::Direct,
            s0_scale: 0.0,
        }
    }
}

impl WaveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eps must be nonnegative, got {}",
                self.eps
            )));
        }
        if self.s0_scale < 0.0 {
            return Err(Error::InvalidParameter("s0_scale must be nonnegative".into()));
        }
        if self.n_sims == 0 || self.eval_steps == 0 {
            return Err(Error::InvalidParameter("n_sims and eval_steps must be positive".into()));
        }
        square(&self.u_cov, 3, "u_cov")?;
        square(&self.r_cov, 2, "r_cov")?;
        interpolation_embedding(self.n_f, self.n_c)?;
        Ok(())
    }
}

fn square(rows: &[Vec<f64>], n: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("{name} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// The discretized benchmark in orthonormal coordinates of the energy space.
#[derive(Debug, Clone)]
pub struct WaveSystem<T: Real> {
    pub model: LgssModel<T>,
    /// Coefficients `[z; v]` ↔ orthonormal coordinates; Gram `diag(K, M)`.
    pub fine_map: CoordinateMap<T>,
    /// Gram of the smoother norm, `diag(K M⁻¹ K, K)`, in coefficients.
    pub x1_gram: PsdMatrix<T>,
    pub mesh: FemMesh1D,
}

impl<T: Real> WaveSystem<T> {
    /// Number of position coordinates; velocity coordinates follow.
    pub fn split(&self) -> usize {
        self.mesh.n_interior
    }

    /// The smoother-norm Gram expressed in orthonormal coordinates,
    /// `T⁻ᵀ G₁ T⁻¹`.
    pub fn x1_weight(&self) -> DMatrix<T> {
        let ti = self.fine_map.factor_inverse();
        symmetrize(&(ti.transpose() * self.x1_gram.as_matrix() * ti))
    }
}

fn cast<T: Real>(m: &DMatrix<f64>) -> DMatrix<T> {
    m.map(lit::<T>)
}

/// Assembles the fine-mesh model.
pub fn build_wave_model<T: Real>(params: &WaveParams) -> Result<WaveSystem<T>> {
    params.validate()?;
    let mesh = FemMesh1D::new(params.n_f)?;
    let n = mesh.n_interior;
    let (mass, stiff) = assemble_fem(&mesh)?;
    let minv = spd_inverse(mass.as_matrix())?;
    let mut a_cont = DMatrix::zeros(2 * n, 2 * n);
    a_cont.view_mut((0, n), (n, n)).fill_with_identity();
    a_cont
        .view_mut((n, 0), (n, n))
        .copy_from(&(-(&minv * stiff.as_matrix())));
    a_cont.view_mut((n, n), (n, n)).fill_diagonal(-params.eps);
    let lhs = DMatrix::identity(2 * n, 2 * n) - a_cont * params.dt;
    let resolvent = lhs.try_inverse().ok_or(Error::SingularStep)?;
    if !resolvent.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularStep);
    }

    let profiles = input_profiles();
    let loads = DMatrix::from_columns(&profiles.map(|b| load_vector(&mesh, b)));
    let mut b_d = DMatrix::zeros(2 * n, 3);
    b_d.view_mut((n, 0), (n, 3)).copy_from(&(&minv * loads));
    let b = match params.noise_placement {
        NoisePlacement::Direct => b_d,
        NoisePlacement::Resolvent => &resolvent * b_d,
    };
    let outputs = output_profiles();
    let mut c = DMatrix::zeros(2, 2 * n);
    for (i, f) in outputs.iter().enumerate() {
        c.view_mut((i, 0), (1, n)).copy_from(&load_vector(&mesh, f).transpose());
    }

    let mut gram = DMatrix::zeros(2 * n, 2 * n);
    gram.view_mut((0, 0), (n, n)).copy_from(stiff.as_matrix());
    gram.view_mut((n, n), (n, n)).copy_from(mass.as_matrix());
    let mut x1 = DMatrix::zeros(2 * n, 2 * n);
    x1.view_mut((0, 0), (n, n))
        .copy_from(&symmetrize(&(stiff.as_matrix() * &minv * stiff.as_matrix())));
    x1.view_mut((n, n), (n, n)).copy_from(stiff.as_matrix());

    let fine_map = gram_orthonormalize(&PsdMatrix::new(cast::<T>(&gram))?)?;
    let t = fine_map.factor().clone();
    let ti = fine_map.factor_inverse();
    let a = &t * cast::<T>(&resolvent) * &ti;
    let b = &t * cast::<T>(&b);
    let c = cast::<T>(&c) * &ti;
    let u = square(&params.u_cov, 3, "u_cov")? * params.dt;
    let r = square(&params.r_cov, 2, "r_cov")?;
    let model = LgssModel::new(
        a,
        b,
        c,
        PsdMatrix::new(cast(&u))?,
        PsdMatrix::new(cast(&r))?,
        DVector::zeros(2 * n),
        PsdMatrix::new(DMatrix::identity(2 * n, 2 * n) * lit::<T>(params.s0_scale))?,
    )?;
    Ok(WaveSystem {
        model,
        fine_map,
        x1_gram: PsdMatrix::new(cast(&x1))?,
        mesh,
    })
}

/// Projection onto the coarse P1 space, embedded blockwise in `[z; v]`.
pub fn build_mesh_projection<T: Real>(
    n_f: usize,
    n_c: usize,
    fine_map: &CoordinateMap<T>,
) -> Result<ProjectionPair<T>> {
    let e = interpolation_embedding(n_f, n_c)?;
    if fine_map.dim() != 2 * n_f {
        return Err(Error::Dimension("coordinate map does not match the fine mesh".into()));
    }
    let mut blocks = DMatrix::zeros(2 * n_f, 2 * n_c);
    blocks.view_mut((0, 0), (n_f, n_c)).copy_from(&e);
    blocks.view_mut((n_f, n_c), (n_f, n_c)).copy_from(&e);
    orthogonal_projection(&cast::<T>(&blocks), fine_map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{op_norm, spectral_radius};

    fn small() -> WaveParams {
        WaveParams {
            n_f: 11,
            n_c: 2,
            ..WaveParams::default()
        }
    }

    #[test]
    fn model_is_stable_and_outputs_positive() {
        let sys = build_wave_model::<f64>(&small()).unwrap();
        assert!(spectral_radius(&sys.model.a) < 1.0);
        let c1 = load_vector(&sys.mesh, output_profiles()[0]);
        assert!(c1.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn undamped_implicit_euler_is_dissipative() {
        let params = WaveParams { eps: 0.0, ..small() };
        let sys = build_wave_model::<f64>(&params).unwrap();
        assert!(op_norm(&sys.model.a) <= 1.0 + 1e-12);
    }

    #[test]
    fn projection_identities() {
        let sys = build_wave_model::<f64>(&small()).unwrap();
        let pair = build_mesh_projection(11, 2, &sys.fine_map).unwrap();
        let (a, b, c) = pair.residuals();
        assert!(a < 1e-10 && b < 1e-10 && c < 1e-10);
        let same = build_mesh_projection(11, 11, &sys.fine_map).unwrap();
        assert!((same.pi_s() - DMatrix::<f64>::identity(22, 22)).amax() < 1e-10);
    }

    #[test]
    fn divisibility_is_enforced() {
        let params = WaveParams { n_c: 4, ..small() };
        assert!(matches!(
            build_wave_model::<f64>(&params),
            Err(Error::IncompatibleMeshes { .. })
        ));
    }
}
