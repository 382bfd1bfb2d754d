//! Operator side of the Wick pairings: products of left/right multiplication
//! superoperators, with the bath contraction picked by the side of the earlier
//! operator in each pair (left gives `C`, right gives `C*`).

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;

use super::kernels::{triple, BathFunctions};
use super::{left, right, SuperMatrix, SystemModel};
use crate::bath::GammaTable;
use crate::error::Result;

fn side(s: usize, m: &Matrix2<C64>) -> SuperMatrix {
    if s == 0 {
        left(m)
    } else {
        right(m)
    }
}

fn sign(s: usize) -> f64 {
    if s == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Nonzero operator coefficients of the fourth-order pairing integrals.
#[derive(Debug, Clone)]
pub struct PairingCoefficients {
    /// `(family B?, x, y, triple, coefficient)`.
    terms: Vec<(bool, usize, usize, usize, SuperMatrix)>,
}

impl PairingCoefficients {
    pub fn new(sys: &SystemModel) -> Self {
        let bohr = sys.bohr_frequencies();
        let full = sys.coupling.map(|x| C64::new(x, 0.0));
        let comp: Vec<Matrix2<C64>> = bohr.iter().map(|&w| sys.coupling_component(w)).collect();
        let mut acc = vec![SuperMatrix::zeros(); 2 * 2 * 2 * 27];
        let slot = |fam: usize, x: usize, y: usize, tr: usize| ((fam * 2 + x) * 2 + y) * 27 + tr;
        for a in 0..3 {
            for b in 0..3 {
                for g in 0..3 {
                    let tr = triple(a, b, g);
                    for s0 in 0..2 {
                        let m0 = side(s0, &full);
                        for s1 in 0..2 {
                            let m1 = side(s1, &comp[a]);
                            for s2 in 0..2 {
                                let m2 = side(s2, &comp[b]);
                                for s3 in 0..2 {
                                    let m3 = side(s3, &comp[g]);
                                    let sg = sign(s0) * sign(s1) * sign(s2) * sign(s3);
                                    let chain = m0 * m1 * m2 * m3;
                                    let pa = (chain - m0 * m2 * m1 * m3) * C64::new(sg, 0.0);
                                    let pb = (chain - m0 * m3 * m1 * m2) * C64::new(sg, 0.0);
                                    acc[slot(0, s2, s3, tr)] += pa;
                                    acc[slot(1, s3, s2, tr)] += pb;
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut terms = Vec::new();
        for fam in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    for tr in 0..27 {
                        let m = acc[slot(fam, x, y, tr)];
                        if m.iter().any(|z| z.norm() > 0.0) {
                            terms.push((fam == 1, x, y, tr, m));
                        }
                    }
                }
            }
        }
        PairingCoefficients { terms }
    }

    pub fn assemble(&self, f: &BathFunctions) -> SuperMatrix {
        let mut out = SuperMatrix::zeros();
        for (fam_b, x, y, tr, m) in &self.terms {
            let v = if *fam_b { f.b[*x][*y][*tr] } else { f.a[*x][*y][*tr] };
            out += m * v;
        }
        out
    }
}

/// Second-order generator from the single pairing, as a cross-check of the
/// explicit Redfield form.
pub fn l2_from_pairings(sys: &SystemModel, gt: &GammaTable, j: usize) -> Result<SuperMatrix> {
    let full = sys.coupling.map(|x| C64::new(x, 0.0));
    let mut out = SuperMatrix::zeros();
    for w in sys.bohr_frequencies() {
        let comp = sys.coupling_component(w);
        let gc = gt.gamma_at(-w, j)?;
        let gs = gt.gamma_at(w, j)?.conj();
        for s0 in 0..2 {
            for s1 in 0..2 {
                let k = if s1 == 0 { gc } else { gs };
                out -= side(s0, &full) * side(s1, &comp) * (k * sign(s0) * sign(s1));
            }
        }
    }
    Ok(out)
}
