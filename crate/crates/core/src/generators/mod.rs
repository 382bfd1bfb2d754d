//! Perturbative TCL generators on the vectorised two-level density matrix.
//!
//! Vectorisation is row-major: `rho[n][m]` sits at index `2 n + m`, and a
//! superoperator entry `[(n,m),(i,j)]` maps `rho[i][j]` into `d rho[n][m] / dt`.
//! All generators are in the Schrödinger picture of the system eigenbasis.
//!
//! The physical coupling lives entirely in the spectral density, so the
//! bookkeeping parameter of the expansion is fixed to one: `L2` is linear and
//! `L4` quadratic in `J`.

mod kernels;
mod pairing;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::bath::GammaTable;
use crate::error::{Error, Result};

pub use kernels::{bath_fcr, BathFunctions, KernelFamily, Tcl4Kernels};
pub use pairing::{l2_from_pairings, PairingCoefficients};

pub type SuperMatrix = Matrix4<C64>;

/// Row-major vectorisation index of `rho[n][m]`.
#[inline]
pub fn vec_index(n: usize, m: usize) -> usize {
    2 * n + m
}

/// Biased two-level system with unit splitting, written in its eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub omega: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Sorted descending: `(omega/2, -omega/2)`.
    pub energies: [f64; 2],
    /// Coupling operator in the eigenbasis, `(sin θ σz + cos θ σx) / 2`.
    pub coupling: Matrix2<f64>,
}

impl SystemModel {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&theta) {
            return Err(Error::InvalidParameter {
                name: "theta",
                reason: format!("must lie in [0, pi/2], got {theta}"),
            });
        }
        let omega = 1.0;
        let (s, c) = theta.sin_cos();
        Ok(SystemModel {
            omega,
            theta,
            epsilon: omega * s,
            delta: omega * c,
            energies: [omega / 2.0, -omega / 2.0],
            coupling: Matrix2::new(0.5 * s, 0.5 * c, 0.5 * c, -0.5 * s),
        })
    }

    /// Bohr frequency `E_a - E_b`.
    pub fn bohr(&self, a: usize, b: usize) -> f64 {
        self.energies[a] - self.energies[b]
    }

    /// Distinct Bohr frequencies, ascending: `[-omega, 0, omega]`.
    pub fn bohr_frequencies(&self) -> [f64; 3] {
        [-self.omega, 0.0, self.omega]
    }

    /// Part of the coupling operator oscillating at Bohr frequency `w`:
    /// entries `A_ab` with `E_a - E_b = w`.
    pub fn coupling_component(&self, w: f64) -> Matrix2<C64> {
        Matrix2::from_fn(|a, b| {
            if (self.bohr(a, b) - w).abs() < 1e-12 {
                C64::new(self.coupling[(a, b)], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }
}

/// Orthonormal eigenvectors of `H = -eps/2 σz + delta/2 σx`, ordered by
/// descending energy. The sign of the second column makes `V[1][1] > 0`
/// (or `V[0][1] > 0` when that entry vanishes); the first column's largest
/// component is positive.
pub fn eigenbasis(epsilon: f64, delta: f64) -> Result<(Matrix2<f64>, [f64; 2])> {
    if epsilon == 0.0 && delta == 0.0 {
        return Err(Error::Domain("degenerate Hamiltonian (eps = delta = 0)".into()));
    }
    let h = Matrix2::new(-epsilon / 2.0, delta / 2.0, delta / 2.0, epsilon / 2.0);
    let eig = SymmetricEigen::new(h);
    let (hi, lo) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let mut v = Matrix2::zeros();
    v.set_column(0, &eig.eigenvectors.column(hi));
    v.set_column(1, &eig.eigenvectors.column(lo));
    let c0 = v.column(0);
    let big = if c0[0].abs() >= c0[1].abs() { c0[0] } else { c0[1] };
    if big < 0.0 {
        v.set_column(0, &(-v.column(0)));
    }
    let key = if v[(1, 1)].abs() > 1e-12 { v[(1, 1)] } else { v[(0, 1)] };
    if key < 0.0 {
        v.set_column(1, &(-v.column(1)));
    }
    Ok((v, [eig.eigenvalues[hi], eig.eigenvalues[lo]]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    L0,
    L2,
    L4,
    Total,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub matrix: SuperMatrix,
    pub time: f64,
    pub order: Order,
}

/// Superoperator of left multiplication `X -> M X`.
pub fn left(m: &Matrix2<C64>) -> SuperMatrix {
    SuperMatrix::from_fn(|r, c| {
        let (n, mm) = (r / 2, r % 2);
        let (i, j) = (c / 2, c % 2);
        if mm == j {
            m[(n, i)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Superoperator of right multiplication `X -> X M`.
pub fn right(m: &Matrix2<C64>) -> SuperMatrix {
    SuperMatrix::from_fn(|r, c| {
        let (n, mm) = (r / 2, r % 2);
        let (i, j) = (c / 2, c % 2);
        if n == i {
            m[(j, mm)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn apply(l: &SuperMatrix, rho: &Matrix2<C64>) -> Matrix2<C64> {
    let v = nalgebra::Vector4::new(rho[(0, 0)], rho[(0, 1)], rho[(1, 0)], rho[(1, 1)]);
    let out = l * v;
    Matrix2::new(out[0], out[1], out[2], out[3])
}

/// Largest population-column sum `|Σ_n L[(n,n),(i,j)]|`; zero for trace-preserving maps.
pub fn trace_defect(l: &SuperMatrix) -> f64 {
    (0..4)
        .map(|c| (l[(vec_index(0, 0), c)] + l[(vec_index(1, 1), c)]).norm())
        .fold(0.0, f64::max)
}

/// Largest violation of `L[(n,m),(i,j)] = conj(L[(m,n),(j,i)])`.
pub fn hermiticity_defect(l: &SuperMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for n in 0..2 {
        for m in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let a = l[(vec_index(n, m), vec_index(i, j))];
                    let b = l[(vec_index(m, n), vec_index(j, i))].conj();
                    worst = worst.max((a - b).norm());
                }
            }
        }
    }
    worst
}

/// Free evolution `-i (E_n - E_m)` on the diagonal.
pub fn l0(sys: &SystemModel) -> Superoperator {
    let mut m = SuperMatrix::zeros();
    for n in 0..2 {
        for k in 0..2 {
            m[(vec_index(n, k), vec_index(n, k))] = C64::new(0.0, -sys.bohr(n, k));
        }
    }
    Superoperator {
        matrix: m,
        time: 0.0,
        order: Order::L0,
    }
}

/// Redfield generator at grid index `j`, with `Γ_ab = Γ_{E_a - E_b}`:
///
/// `L_{nm,ij} = A_ni A_jm [Γ_in + Γ*_jm] - Σ_k [A_nk A_ki δ_jm Γ_ik + δ_ni A_jk A_km Γ*_jk]`.
pub fn l2_at_index(sys: &SystemModel, gt: &GammaTable, j: usize) -> Result<SuperMatrix> {
    if j > gt.n {
        return Err(Error::OffGrid(j as f64 * gt.dt));
    }
    let mut g = [[C64::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            g[a][b] = gt.gamma_at(sys.bohr(a, b), j)?;
        }
    }
    let a = &sys.coupling;
    let mut out = SuperMatrix::zeros();
    for n in 0..2 {
        for m in 0..2 {
            for i in 0..2 {
                for jj in 0..2 {
                    let mut v = a[(n, i)] * a[(jj, m)] * (g[i][n] + g[jj][m].conj());
                    for k in 0..2 {
                        if jj == m {
                            v -= a[(n, k)] * a[(k, i)] * g[i][k];
                        }
                        if n == i {
                            v -= a[(jj, k)] * a[(k, m)] * g[jj][k].conj();
                        }
                    }
                    out[(vec_index(n, m), vec_index(i, jj))] = v;
                }
            }
        }
    }
    Ok(out)
}

pub fn l2(sys: &SystemModel, gt: &GammaTable, t: f64) -> Result<Superoperator> {
    let j = gt.grid_index(t)?;
    Ok(Superoperator {
        matrix: l2_at_index(sys, gt, j)?,
        time: t,
        order: Order::L2,
    })
}

/// Fourth-order generator at grid time `t`. Builds the kernel tables for the
/// whole grid; use [`generator_series`] when many times are needed.
pub fn l4(sys: &SystemModel, gt: &GammaTable, t: f64) -> Result<Superoperator> {
    let j = gt.grid_index(t)?;
    let kernels = Tcl4Kernels::new(gt, &sys.bohr_frequencies())?;
    let coeffs = PairingCoefficients::new(sys);
    Ok(Superoperator {
        matrix: coeffs.assemble(&kernels.families_at(j)),
        time: t,
        order: Order::L4,
    })
}

/// Precomputed generators `L(t_j) = L0 + L2(t_j) [+ L4(t_j)]` for `j = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSeries {
    pub dt: f64,
    pub n: usize,
    pub order: u8,
    pub system: SystemModel,
    pub l0: SuperMatrix,
    pub l2: Vec<SuperMatrix>,
    pub l4: Vec<SuperMatrix>,
    pub total: Vec<SuperMatrix>,
}

impl GeneratorSeries {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |j| j as f64 * self.dt)
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt;
        let j = x.round();
        if !(t >= 0.0) || (x - j).abs() > 1e-6 || j as usize > self.n {
            return Err(Error::OffGrid(t));
        }
        Ok(j as usize)
    }

    /// The same series cut back to a lower order.
    pub fn truncated(&self, order: u8) -> Self {
        let mut out = self.clone();
        if order < 4 {
            out.l4.clear();
        }
        if order < 2 {
            out.l2.clear();
        }
        out.order = order.min(self.order);
        out.total = (0..=self.n)
            .map(|j| {
                let mut m = self.l0;
                if let Some(x) = out.l2.get(j) {
                    m += x;
                }
                if let Some(x) = out.l4.get(j) {
                    m += x;
                }
                m
            })
            .collect();
        out
    }

    /// Every `stride`-th grid point, as a series on the coarser grid.
    pub fn subsample(&self, stride: usize) -> Self {
        let pick = |v: &Vec<SuperMatrix>| v.iter().step_by(stride).copied().collect::<Vec<_>>();
        let total = pick(&self.total);
        GeneratorSeries {
            dt: self.dt * stride as f64,
            n: total.len() - 1,
            order: self.order,
            system: self.system.clone(),
            l0: self.l0,
            l2: pick(&self.l2),
            l4: pick(&self.l4),
            total,
        }
    }

    /// CSV `t,row,col,re,im` for one order (0, 2, 4, or any other value for the total).
    pub fn write_csv<W: Write>(&self, order: u8, mut w: W) -> Result<()> {
        writeln!(w, "t,row,col,re,im")?;
        for j in 0..=self.n {
            let m = match order {
                0 => &self.l0,
                2 if !self.l2.is_empty() => &self.l2[j],
                4 if !self.l4.is_empty() => &self.l4[j],
                _ => &self.total[j],
            };
            for r in 0..4 {
                for c in 0..4 {
                    let v = m[(r, c)];
                    writeln!(w, "{:e},{},{},{:e},{:e}", j as f64 * self.dt, r, c, v.re, v.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Generator series of perturbative order 0, 2 or 4 over the whole table grid.
pub fn generator_series(sys: &SystemModel, gt: &GammaTable, order: u8) -> Result<GeneratorSeries> {
    if ![0, 2, 4].contains(&order) {
        return Err(Error::InvalidParameter {
            name: "order",
            reason: format!("must be 0, 2 or 4, got {order}"),
        });
    }
    let n = gt.n;
    let l0m = l0(sys).matrix;
    let l2s: Vec<SuperMatrix> = if order >= 2 {
        (0..=n)
            .into_par_iter()
            .map(|j| l2_at_index(sys, gt, j))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let l4s: Vec<SuperMatrix> = if order >= 4 {
        let kernels = Tcl4Kernels::new(gt, &sys.bohr_frequencies())?;
        let coeffs = PairingCoefficients::new(sys);
        (0..=n)
            .into_par_iter()
            .map(|j| coeffs.assemble(&kernels.families_at(j)))
            .collect()
    } else {
        Vec::new()
    };
    let total = (0..=n)
        .map(|j| {
            let mut m = l0m;
            if let Some(x) = l2s.get(j) {
                m += x;
            }
            if let Some(x) = l4s.get(j) {
                m += x;
            }
            m
        })
        .collect();
    Ok(GeneratorSeries {
        dt: gt.dt,
        n,
        order,
        system: sys.clone(),
        l0: l0m,
        l2: l2s,
        l4: l4s,
        total,
    })
}

/// `||L4(t)||_F / ||L2(t)||_F`.
pub fn norm_ratio(series: &GeneratorSeries, t: f64) -> Result<f64> {
    if series.order < 4 {
        return Err(Error::RatioUndefined("series lacks the fourth-order generator".into()));
    }
    let j = series.index_of(t)?;
    let d = series.l2[j].norm();
    if d == 0.0 {
        return Err(Error::RatioUndefined("||L2|| = 0".into()));
    }
    Ok(series.l4[j].norm() / d)
}
