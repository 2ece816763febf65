use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Unitary DFT matrix with `F[j, k] = exp(-2*pi*i*j*k/n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> Result<Array2<Complex64>> {
    if n == 0 {
        return invalid("DFT size must be positive");
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(Array2::from_shape_fn((n, n), |(j, k)| {
        // Reduce the exponent modulo n first to keep the phase accurate for large n.
        let phase = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
        Complex64::from_polar(scale, phase)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unitarity_error(n: usize) -> f64 {
        let f = dft_matrix(n).unwrap();
        let fh = f.t().mapv(|z| z.conj());
        let prod = f.dot(&fh);
        prod.indexed_iter()
            .map(|((i, j), z)| {
                let target = if i == j { 1.0 } else { 0.0 };
                (z - Complex64::new(target, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn size_one_is_identity() {
        let f = dft_matrix(1).unwrap();
        assert_eq!(f[[0, 0]], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn size_two_is_scaled_hadamard() {
        let f = dft_matrix(2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [[s, s], [s, -s]];
        for j in 0..2 {
            for k in 0..2 {
                assert!((f[[j, k]] - Complex64::new(expected[j][k], 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn size_eight_matches_direct_summation() {
        // Oracle: entries from the defining formula without modular reduction.
        let f = dft_matrix(8).unwrap();
        for j in 0..8 {
            for k in 0..8 {
                let phase = -2.0 * std::f64::consts::PI * (j * k) as f64 / 8.0;
                let z = Complex64::new(phase.cos(), phase.sin()) / 8f64.sqrt();
                assert!((f[[j, k]] - z).norm() < 1e-14);
            }
        }
        assert!(unitarity_error(8) < 1e-12);
    }

    #[test]
    fn zero_size_is_rejected() {
        assert!(dft_matrix(0).is_err());
    }

    #[test]
    fn unitary_for_powers_of_two() {
        let mut n = 2;
        while n <= 256 {
            assert!(unitarity_error(n) < 1e-10, "n = {n}");
            n *= 2;
        }
    }
}
