//! Seeded random matrices: Haar unitaries, Gaussian matrices, random states and
//! completely positive maps. Everything takes an explicit `Rng` so runs are
//! reproducible from a seed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numkernel::{ComplexMatrix, HermitianMatrix};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard complex Gaussian entries (real and imaginary
/// parts each N(0, 1/2)).
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the phases of
/// `diag(R)` pushed back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let qr = gaussian(rng, n, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random Hermitian matrix `(G + G*)/2`.
pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> HermitianMatrix {
    HermitianMatrix::new(gaussian(rng, n, n)).expect("square by construction")
}

/// Random PSD matrix of the given rank, `G G*` with `G` of shape `n x rank`.
pub fn psd_of_rank<R: Rng + ?Sized>(rng: &mut R, n: usize, rank: usize) -> HermitianMatrix {
    let g = gaussian(rng, n, rank);
    HermitianMatrix::new(&g * g.adjoint()).expect("square by construction")
}

/// Random unit vector in C^n.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> nalgebra::DVector<Complex64> {
    let g = gaussian(rng, n, 1);
    let norm = g.norm();
    nalgebra::DVector::from_iterator(n, g.iter().map(|z| z / norm))
}
