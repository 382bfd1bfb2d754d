use nalgebra::{Matrix2, Matrix3, Matrix4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bath::GammaTable;
use crate::error::Result;
use crate::generators::{l0, left, right, SuperMatrix, SystemModel};

/// Second-order stationary generator in the Bloch basis `(I, σx, -σy, σz)`,
/// together with the rate (`J`) and shift (`S`) components it is built from.
/// The `plus` components belong to the downward transition (`Γ_{-Ω}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochGenerator {
    pub matrix: Matrix4<C64>,
    pub j_plus: f64,
    pub j_minus: f64,
    pub j_zero: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub s_zero: f64,
    pub splitting: f64,
}

/// `Γ_ω(t_n)` for `ω = -Ω, 0, Ω`.
pub fn stationary_gammas(sys: &SystemModel, gt: &GammaTable) -> Result<[C64; 3]> {
    let w = sys.bohr_frequencies();
    Ok([gt.asymptotic(w[0])?, gt.asymptotic(w[1])?, gt.asymptotic(w[2])?])
}

/// Change of basis from the Bloch components to row-major vectorised matrices.
pub fn bloch_basis() -> Matrix4<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let r = |x: f64| C64::new(x * s, 0.0);
    let i = C64::new(0.0, s);
    Matrix4::new(
        r(1.0), r(0.0), C64::new(0.0, 0.0), r(1.0),
        r(0.0), r(1.0), i, r(0.0),
        r(0.0), r(1.0), -i, r(0.0),
        r(1.0), r(0.0), C64::new(0.0, 0.0), r(-1.0),
    )
}

/// `U† (D_f + D_BR) U` with `D_BR ρ = Λ ρ A + A ρ Λ† - A Λ ρ - ρ Λ† A` and
/// `Λ_ni = A_ni Γ_{E_i - E_n}`; `gamma_inf` is ordered `[-Ω, 0, Ω]`.
pub fn bloch_redfield_bloch_basis(sys: &SystemModel, gamma_inf: [C64; 3]) -> BlochGenerator {
    let g = |w: f64| {
        if w < -1e-12 {
            gamma_inf[0]
        } else if w > 1e-12 {
            gamma_inf[2]
        } else {
            gamma_inf[1]
        }
    };
    let a = sys.coupling.map(|x| C64::new(x, 0.0));
    let lambda = Matrix2::from_fn(|n, i| a[(n, i)] * g(sys.bohr(i, n)));
    let ld = lambda.adjoint();
    let dbr: SuperMatrix = left(&lambda) * right(&a) + left(&a) * right(&ld) - left(&(a * lambda)) - right(&(ld * a));
    let u = bloch_basis();
    let matrix = u.adjoint() * (l0(sys).matrix + dbr) * u;
    BlochGenerator {
        matrix,
        j_plus: 0.5 * gamma_inf[0].re,
        j_minus: 0.5 * gamma_inf[2].re,
        j_zero: 0.5 * gamma_inf[1].re,
        s_plus: -0.5 * gamma_inf[0].im,
        s_minus: -0.5 * gamma_inf[2].im,
        s_zero: -0.5 * gamma_inf[1].im,
        splitting: sys.omega,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationRoots {
    /// Sorted by imaginary part, then real part.
    pub roots: [C64; 3],
    pub overdamped: bool,
}

/// Eigenvalues of the zero-bias `(x, -y, z)` block
/// `[[0, Δ, 0], [S- - S+ - Δ, -(J+ + J-), 0], [0, 0, -(J+ + J-)]]`.
pub fn relaxation_eigenvalues(j_plus: f64, j_minus: f64, s_plus: f64, s_minus: f64, splitting: f64) -> RelaxationRoots {
    let sum = j_plus + j_minus;
    let d = splitting;
    let m = Matrix3::new(0.0, d, 0.0, s_minus - s_plus - d, -sum, 0.0, 0.0, 0.0, -sum);
    let ev = m.complex_eigenvalues();
    let mut roots = [ev[0], ev[1], ev[2]];
    roots.sort_by(|x, y| x.im.total_cmp(&y.im).then(x.re.total_cmp(&y.re)));
    RelaxationRoots {
        roots,
        overdamped: sum * sum > 4.0 * (d * d - d * s_minus + d * s_plus),
    }
}
