use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Result, SimError};
use crate::scalar::Real;

const UNITARY_TOL: f64 = 1e-10;

/// A unitary acting on the adversary registers only.
#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryOp<T> {
    /// Dense gate on the listed adversary qubits. `matrix` is row-major of
    /// side `2^qubits.len()`; bit `j` of a local index is `qubits[j]`.
    Gate {
        qubits: Vec<usize>,
        matrix: Vec<Complex<T>>,
    },
    /// Basis permutation `|a> -> |perm[a]>` over the whole adversary space.
    Permutation(Vec<usize>),
}

impl<T: Real> AdversaryOp<T> {
    pub fn gate(qubits: Vec<usize>, matrix: Vec<Complex<T>>) -> Self {
        AdversaryOp::Gate { qubits, matrix }
    }

    pub fn hadamard(qubit: usize) -> Self {
        let h = T::FRAC_1_SQRT_2();
        let z = T::zero();
        Self::gate(
            vec![qubit],
            vec![
                Complex::new(h, z),
                Complex::new(h, z),
                Complex::new(h, z),
                Complex::new(-h, z),
            ],
        )
    }

    pub fn pauli_x(qubit: usize) -> Self {
        let o = Complex::new(T::one(), T::zero());
        let z = Complex::new(T::zero(), T::zero());
        Self::gate(vec![qubit], vec![z, o, o, z])
    }

    /// Permutation built from a basis map over `2^qubits` states.
    pub fn permutation_from_fn(qubits: u32, f: impl Fn(usize) -> usize) -> Self {
        AdversaryOp::Permutation((0..1usize << qubits).map(f).collect())
    }

    pub fn validate(&self, adversary_qubits: u32) -> Result<()> {
        match self {
            AdversaryOp::Gate { qubits, matrix } => {
                let n = qubits.len();
                if n == 0 {
                    return Err(SimError::InvalidOp("gate on zero qubits".into()));
                }
                for (i, &q) in qubits.iter().enumerate() {
                    if q >= adversary_qubits as usize {
                        return Err(SimError::InvalidOp(format!(
                            "qubit {q} out of range (adversary has {adversary_qubits})"
                        )));
                    }
                    if qubits[..i].contains(&q) {
                        return Err(SimError::InvalidOp(format!("qubit {q} repeated")));
                    }
                }
                let side = 1usize << n;
                if matrix.len() != side * side {
                    return Err(SimError::InvalidOp(format!(
                        "matrix has {} entries, expected {}",
                        matrix.len(),
                        side * side
                    )));
                }
                let deviation = unitarity_deviation(matrix, side);
                if !(deviation <= UNITARY_TOL) {
                    return Err(SimError::NotUnitary { deviation });
                }
                Ok(())
            }
            AdversaryOp::Permutation(perm) => {
                let dim = 1usize << adversary_qubits;
                if perm.len() != dim {
                    return Err(SimError::InvalidOp(format!(
                        "permutation of length {} on a space of dimension {dim}",
                        perm.len()
                    )));
                }
                let mut seen = vec![false; dim];
                for &t in perm {
                    if t >= dim || seen[t] {
                        return Err(SimError::InvalidOp("map is not a bijection".into()));
                    }
                    seen[t] = true;
                }
                Ok(())
            }
        }
    }

    /// Applies the op to a vector whose low `offset` bits are untouched.
    /// Assumes `validate` passed.
    pub(crate) fn apply(&self, amps: &mut [Complex<T>], offset: usize) {
        match self {
            AdversaryOp::Gate { qubits, matrix } => {
                let globals: Vec<usize> = qubits.iter().map(|q| q + offset).collect();
                apply_dense(amps, &globals, matrix);
            }
            AdversaryOp::Permutation(perm) => {
                let block = 1usize << offset;
                let old = amps.to_vec();
                for (a, &target) in perm.iter().enumerate() {
                    amps[target * block..(target + 1) * block]
                        .copy_from_slice(&old[a * block..(a + 1) * block]);
                }
            }
        }
    }
}

fn unitarity_deviation<T: Real>(m: &[Complex<T>], side: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..side {
        for j in 0..side {
            let mut dot = Complex::new(T::zero(), T::zero());
            for r in 0..side {
                dot += m[r * side + i].conj() * m[r * side + j];
            }
            let target = if i == j { T::one() } else { T::zero() };
            let d = (dot - Complex::new(target, T::zero())).norm().as_f64();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

/// Inserts zero bits at the (sorted) positions.
fn spread(mut i: usize, sorted: &[usize]) -> usize {
    for &b in sorted {
        let low = i & ((1 << b) - 1);
        i = ((i >> b) << (b + 1)) | low;
    }
    i
}

fn apply_dense<T: Real>(amps: &mut [Complex<T>], targets: &[usize], matrix: &[Complex<T>]) {
    let n = targets.len();
    let side = 1usize << n;
    let mut sorted = targets.to_vec();
    sorted.sort_unstable();
    let offsets: Vec<usize> = (0..side)
        .map(|local| {
            targets
                .iter()
                .enumerate()
                .filter(|(j, _)| (local >> j) & 1 == 1)
                .fold(0, |acc, (_, &t)| acc | (1 << t))
        })
        .collect();
    let mut buf = vec![Complex::new(T::zero(), T::zero()); side];
    for base in 0..amps.len() >> n {
        let b = spread(base, &sorted);
        for (slot, &o) in buf.iter_mut().zip(&offsets) {
            *slot = amps[b | o];
        }
        for (r, &o) in offsets.iter().enumerate() {
            let row = &matrix[r * side..(r + 1) * side];
            amps[b | o] = row
                .iter()
                .zip(&buf)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (m, v)| {
                    acc + *m * *v
                });
        }
    }
}

/// Haar-distributed unitary of side `dim` (Gram-Schmidt on complex
/// Gaussian columns).
pub fn random_unitary<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Complex<T>> {
    let mut cols: Vec<Vec<Complex<f64>>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<Complex<f64>> = (0..dim)
            .map(|_| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for _ in 0..2 {
            for c in &cols {
                let proj: Complex<f64> = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= proj * ci;
                }
            }
        }
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        cols.push(v);
    }
    let mut out = vec![Complex::new(T::zero(), T::zero()); dim * dim];
    for (j, col) in cols.iter().enumerate() {
        for (i, a) in col.iter().enumerate() {
            out[i * dim + j] = Complex::new(T::lit(a.re), T::lit(a.im));
        }
    }
    out
}
