//! Delay-Doppler lattice geometry and the structured linear operators built
//! on it: the symplectic transforms `F_N ⊗ I_M` / `F_N^H ⊗ I_M`, fractional
//! powers of the cyclic shift `Π`, and fractional powers of the Doppler
//! phase ramp `Δ`.
//!
//! Vectors are column-stacked: bin `(α, β)` lives at index `c = α + β·M`.
//! All DFTs are unitary.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};

pub type C64 = Complex64;

/// Largest operator dimension for which a dense realization is produced.
pub const MAX_DENSE_DIM: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdGrid {
    m: usize,
    n: usize,
    delta_f: f64,
    symbol_period: f64,
    carrier_hz: f64,
}

impl DdGrid {
    /// `m` delay bins (subcarriers), `n` Doppler bins (slots). The symbol
    /// period is fixed to `1 / delta_f`.
    pub fn new(m: usize, n: usize, delta_f: f64, carrier_hz: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Config(format!("grid must be non-empty, got {m}x{n}")));
        }
        if !(delta_f > 0.0 && delta_f.is_finite()) {
            return Err(Error::Config(format!("subcarrier spacing must be positive, got {delta_f}")));
        }
        if !(carrier_hz >= 0.0 && carrier_hz.is_finite()) {
            return Err(Error::Config(format!("invalid carrier frequency {carrier_hz}")));
        }
        Ok(Self {
            m,
            n,
            delta_f,
            symbol_period: 1.0 / delta_f,
            carrier_hz,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Samples per block, `M·N`.
    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn symbol_period(&self) -> f64 {
        self.symbol_period
    }

    pub fn sample_period(&self) -> f64 {
        self.symbol_period / self.m as f64
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }

    #[inline]
    pub fn index(&self, alpha: usize, beta: usize) -> usize {
        debug_assert!(alpha < self.m && beta < self.n);
        alpha + beta * self.m
    }

    #[inline]
    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.m, c / self.m)
    }
}

/// An `M × N` block of delay-Doppler samples, stored column-stacked.
#[derive(Clone, PartialEq)]
pub struct DdBlock {
    m: usize,
    n: usize,
    data: Vec<C64>,
}

impl fmt::Debug for DdBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DdBlock")
            .field("m", &self.m)
            .field("n", &self.n)
            .field("energy", &self.energy())
            .finish()
    }
}

impl DdBlock {
    pub fn zeros(grid: &DdGrid) -> Self {
        Self {
            m: grid.m,
            n: grid.n,
            data: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Devectorize a column-stacked vector.
    pub fn from_vec(grid: &DdGrid, data: Vec<C64>) -> Result<Self> {
        check_len(grid.len(), data.len())?;
        Ok(Self {
            m: grid.m,
            n: grid.n,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, alpha: usize, beta: usize) -> C64 {
        self.data[alpha + beta * self.m]
    }

    #[inline]
    pub fn set(&mut self, alpha: usize, beta: usize, v: C64) {
        self.data[alpha + beta * self.m] = v;
    }

    /// The column-stacked vector `vec(X)`.
    pub fn as_vec(&self) -> &[C64] {
        &self.data
    }

    pub fn as_vec_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn column_energy(&self, beta: usize) -> f64 {
        self.data[beta * self.m..(beta + 1) * self.m]
            .iter()
            .map(|v| v.norm_sqr())
            .sum()
    }

    pub fn row_energy(&self, alpha: usize) -> f64 {
        (0..self.n).map(|b| self.get(alpha, b).norm_sqr()).sum()
    }
}

/// A square linear map on `C^dim`.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// Apply in place. `x.len()` must equal `dim()`.
    fn apply_in_place(&self, x: &mut [C64]);

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.dim(), x.len())?;
        let mut out = x.to_vec();
        self.apply_in_place(&mut out);
        Ok(out)
    }

    /// Dense realization. The default probes the fast rule with unit
    /// vectors; implementors with an independent closed form override it.
    fn to_dense(&self) -> Result<DMatrix<C64>> {
        check_dense(self.dim())?;
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![C64::new(0.0, 0.0); n];
        for col in 0..n {
            e.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            e[col] = C64::new(1.0, 0.0);
            self.apply_in_place(&mut e);
            for (row, v) in e.iter().enumerate() {
                out[(row, col)] = *v;
            }
        }
        Ok(out)
    }
}

pub(crate) fn check_dense(dim: usize) -> Result<()> {
    if dim > MAX_DENSE_DIM {
        Err(Error::Config(format!(
            "dense realization capped at {MAX_DENSE_DIM}, operator has dimension {dim}"
        )))
    } else {
        Ok(())
    }
}

/// Unitary DFT matrix, `F[k, l] = e^{-j2πkl/n} / √n`.
pub fn dense_dft(n: usize) -> DMatrix<C64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |k, l| {
        let e = ((k * l) % n) as f64 / n as f64;
        C64::from_polar(scale, -2.0 * PI * e)
    })
}

/// Dense `F_N ⊗ I_M` (or its adjoint when `inverse`).
pub fn dense_sfft(grid: &DdGrid, inverse: bool) -> Result<DMatrix<C64>> {
    check_dense(grid.len())?;
    let f = dense_dft(grid.n);
    let f = if inverse { f.adjoint() } else { f };
    Ok(f.kronecker(&DMatrix::<C64>::identity(grid.m, grid.m)))
}

/// Planned `F_N ⊗ I_M` and its inverse.
#[derive(Clone)]
pub struct DdTransform {
    m: usize,
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for DdTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DdTransform({}x{})", self.m, self.n)
    }
}

impl DdTransform {
    pub fn new(grid: &DdGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m: grid.m,
            n: grid.n,
            fwd: planner.plan_fft_forward(grid.n),
            inv: planner.plan_fft_inverse(grid.n),
        }
    }

    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn run(&self, x: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
        let (m, n) = (self.m, self.n);
        assert_eq!(x.len(), m * n, "transform length");
        // Row-major copy so each delay row is one contiguous N-point FFT.
        let mut rows = vec![C64::new(0.0, 0.0); m * n];
        for beta in 0..n {
            for alpha in 0..m {
                rows[alpha * n + beta] = x[alpha + beta * m];
            }
        }
        fft.process(&mut rows);
        let scale = 1.0 / (n as f64).sqrt();
        for beta in 0..n {
            for alpha in 0..m {
                x[alpha + beta * m] = rows[alpha * n + beta] * scale;
            }
        }
    }

    /// `x ← (F_N ⊗ I_M) x`.
    pub fn sfft_in_place(&self, x: &mut [C64]) {
        self.run(x, &self.fwd);
    }

    /// `x ← (F_N^H ⊗ I_M) x`.
    pub fn isfft_in_place(&self, x: &mut [C64]) {
        self.run(x, &self.inv);
    }
}

/// Receiver-side transform: time block to delay-Doppler, `(F_N ⊗ I_M) x`.
pub fn sfft_rx(time_block: &[C64], grid: &DdGrid) -> Result<Vec<C64>> {
    check_len(grid.len(), time_block.len())?;
    let mut out = time_block.to_vec();
    DdTransform::new(grid).sfft_in_place(&mut out);
    Ok(out)
}

/// Transmit-side transform: delay-Doppler to time block, `(F_N^H ⊗ I_M) x`.
pub fn isfft_tx(dd_vector: &[C64], grid: &DdGrid) -> Result<Vec<C64>> {
    check_len(grid.len(), dd_vector.len())?;
    let mut out = dd_vector.to_vec();
    DdTransform::new(grid).isfft_in_place(&mut out);
    Ok(out)
}

/// `F_N ⊗ I_M` as an operator.
#[derive(Debug, Clone)]
pub struct SfftOperator {
    grid: DdGrid,
    transform: DdTransform,
    inverse: bool,
}

impl SfftOperator {
    pub fn forward(grid: &DdGrid) -> Self {
        Self {
            grid: *grid,
            transform: DdTransform::new(grid),
            inverse: false,
        }
    }

    pub fn inverse(grid: &DdGrid) -> Self {
        Self {
            inverse: true,
            ..Self::forward(grid)
        }
    }
}

impl LinearOperator for SfftOperator {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn apply_in_place(&self, x: &mut [C64]) {
        if self.inverse {
            self.transform.isfft_in_place(x)
        } else {
            self.transform.sfft_in_place(x)
        }
    }

    fn to_dense(&self) -> Result<DMatrix<C64>> {
        dense_sfft(&self.grid, self.inverse)
    }
}

/// Reduce `x·m mod size` before scaling to an angle, keeping precision for
/// large products.
#[inline]
fn cycles(x: f64, m: usize, size: usize) -> f64 {
    (x * m as f64).rem_euclid(size as f64) / size as f64
}

/// `Π^x`, the `x`-th power of the forward cyclic shift on `C^size`.
///
/// Fractional powers are taken in the DFT eigenbasis with unnormalized
/// frequency indices: `Π^x = F^H diag(e^{-j2πxm/size}) F`, `m = 0..size-1`.
#[derive(Clone)]
pub struct CyclicShiftPower {
    size: usize,
    exponent: f64,
    integer_shift: Option<usize>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    // Eigenvalues with the 1/size of the FFT pair folded in.
    spectrum: Vec<C64>,
}

impl fmt::Debug for CyclicShiftPower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CyclicShiftPower(size={}, x={})", self.size, self.exponent)
    }
}

pub fn cyclic_shift_power(x_exponent: f64, size: usize) -> Result<CyclicShiftPower> {
    CyclicShiftPower::new(x_exponent, size)
}

impl CyclicShiftPower {
    pub fn new(exponent: f64, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("cyclic shift size must be at least 1".into()));
        }
        if !exponent.is_finite() {
            return Err(Error::Config(format!("non-finite shift exponent {exponent}")));
        }
        let mut planner = FftPlanner::new();
        let integer_shift = (exponent.fract() == 0.0)
            .then(|| (exponent as i64).rem_euclid(size as i64) as usize);
        let spectrum = Self::eigenvalues(exponent, size)
            .into_iter()
            .map(|v| v / size as f64)
            .collect();
        Ok(Self {
            size,
            exponent,
            integer_shift,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
            spectrum,
        })
    }

    pub fn eigenvalues(exponent: f64, size: usize) -> Vec<C64> {
        (0..size)
            .map(|m| C64::from_polar(1.0, -2.0 * PI * cycles(exponent, m, size)))
            .collect()
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Unit-normalized eigenvalues `e^{-j2πxm/size}` scaled by `1/size`.
    pub(crate) fn scaled_spectrum(&self) -> &[C64] {
        &self.spectrum
    }
}

impl LinearOperator for CyclicShiftPower {
    fn dim(&self) -> usize {
        self.size
    }

    fn apply_in_place(&self, x: &mut [C64]) {
        if let Some(s) = self.integer_shift {
            x.rotate_right(s);
            return;
        }
        self.fwd.process(x);
        for (v, s) in x.iter_mut().zip(&self.spectrum) {
            *v *= s;
        }
        self.inv.process(x);
    }

    /// Materializes `F^H D F` from explicit DFT matrices.
    fn to_dense(&self) -> Result<DMatrix<C64>> {
        check_dense(self.size)?;
        let f = dense_dft(self.size);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(Self::eigenvalues(
            self.exponent,
            self.size,
        )));
        Ok(f.adjoint() * d * f)
    }
}

/// `Δ^x = diag(e^{j2πxc/size})`.
#[derive(Debug, Clone)]
pub struct DopplerPhasePower {
    exponent: f64,
    diag: Vec<C64>,
}

pub fn doppler_phase_power(x_exponent: f64, size: usize) -> Result<DopplerPhasePower> {
    DopplerPhasePower::new(x_exponent, size)
}

impl DopplerPhasePower {
    pub fn new(exponent: f64, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("Doppler operator size must be at least 1".into()));
        }
        if !exponent.is_finite() {
            return Err(Error::Config(format!("non-finite Doppler exponent {exponent}")));
        }
        let diag = (0..size)
            .map(|c| C64::from_polar(1.0, 2.0 * PI * cycles(exponent, c, size)))
            .collect();
        Ok(Self { exponent, diag })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn diagonal(&self) -> &[C64] {
        &self.diag
    }
}

impl LinearOperator for DopplerPhasePower {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply_in_place(&self, x: &mut [C64]) {
        for (v, d) in x.iter_mut().zip(&self.diag) {
            *v *= d;
        }
    }

    fn to_dense(&self) -> Result<DMatrix<C64>> {
        check_dense(self.dim())?;
        Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            &self.diag,
        )))
    }
}

/// Relative Euclidean error `‖a − b‖ / ‖b‖`.
pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    fn energy(x: &[C64]) -> f64 {
        x.iter().map(|v| v.norm_sqr()).sum()
    }

    fn dense_apply(d: &DMatrix<C64>, x: &[C64]) -> Vec<C64> {
        (d * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
    }

    #[test]
    fn grid_invariants() {
        let g = DdGrid::new(128, 16, 15e3, 4e9).unwrap();
        assert_eq!(g.symbol_period() * g.delta_f(), 1.0);
        assert_eq!(g.len(), 2048);
        assert!((g.sample_period() - g.symbol_period() / 128.0).abs() < 1e-18);
        assert_eq!(g.coords(g.index(5, 7)), (5, 7));
        assert!(DdGrid::new(0, 4, 1.0, 0.0).is_err());
        assert!(DdGrid::new(4, 4, 0.0, 0.0).is_err());
    }

    #[test]
    fn vectorization_is_column_stacked() {
        let g = DdGrid::new(3, 2, 1.0, 0.0).unwrap();
        let v: Vec<C64> = (0..6).map(|i| c(i as f64, 0.0)).collect();
        let b = DdBlock::from_vec(&g, v.clone()).unwrap();
        assert_eq!(b.get(1, 1), c(4.0, 0.0));
        assert_eq!(b.clone().into_vec(), v);
        assert!(DdBlock::from_vec(&g, vec![c(0.0, 0.0); 5]).is_err());
    }

    #[test]
    fn sfft_of_zero_is_zero() {
        let g = DdGrid::new(4, 4, 1.0, 0.0).unwrap();
        let z = vec![c(0.0, 0.0); 16];
        assert_eq!(sfft_rx(&z, &g).unwrap(), z);
        assert_eq!(isfft_tx(&z, &g).unwrap(), z);
    }

    #[test]
    fn sfft_unit_impulse_2x2() {
        let g = DdGrid::new(2, 2, 1.0, 0.0).unwrap();
        let mut x = vec![c(0.0, 0.0); 4];
        x[0] = c(1.0, 0.0);
        let y = DdBlock::from_vec(&g, sfft_rx(&x, &g).unwrap()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((y.get(0, 0) - c(h, 0.0)).norm() < 1e-15);
        assert!((y.get(0, 1) - c(h, 0.0)).norm() < 1e-15);
        assert_eq!(y.get(1, 0), c(0.0, 0.0));
        assert_eq!(y.get(1, 1), c(0.0, 0.0));
    }

    #[test]
    fn sfft_is_unitary_and_invertible() {
        let g = DdGrid::new(8, 4, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = random_vec(&mut rng, g.len());
            let y = sfft_rx(&x, &g).unwrap();
            assert!((energy(&y) - energy(&x)).abs() <= 1e-12 * energy(&x));
            let back = isfft_tx(&y, &g).unwrap();
            assert!(rel_err(&back, &x) < 1e-12);
        }
    }

    #[test]
    fn sfft_length_mismatch() {
        let g = DdGrid::new(4, 4, 1.0, 0.0).unwrap();
        assert!(matches!(
            sfft_rx(&[c(0.0, 0.0); 3], &g),
            Err(Error::Dimension { expected: 16, got: 3 })
        ));
    }

    #[test]
    fn isfft_of_dd_impulse_expands_kronecker() {
        let g = DdGrid::new(4, 8, 1.0, 0.0).unwrap();
        let (l, k) = (2usize, 3usize);
        let mut x = vec![c(0.0, 0.0); g.len()];
        x[g.index(l, k)] = c(1.0, 0.0);
        let s = isfft_tx(&x, &g).unwrap();
        let n = g.n() as f64;
        for (idx, v) in s.iter().enumerate() {
            let (alpha, m) = g.coords(idx);
            let expect = if alpha == l {
                C64::from_polar(1.0 / n.sqrt(), 2.0 * PI * (k * m) as f64 / n)
            } else {
                c(0.0, 0.0)
            };
            assert!((v - expect).norm() < 1e-14, "sample {idx}");
        }
    }

    #[test]
    fn sfft_fast_matches_kronecker() {
        let g = DdGrid::new(4, 8, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for inverse in [false, true] {
            let op = if inverse {
                SfftOperator::inverse(&g)
            } else {
                SfftOperator::forward(&g)
            };
            let d = op.to_dense().unwrap();
            for _ in 0..10 {
                let x = random_vec(&mut rng, g.len());
                assert!(rel_err(&op.apply(&x).unwrap(), &dense_apply(&d, &x)) < 1e-12);
            }
        }
    }

    #[test]
    fn cyclic_shift_zero_is_identity() {
        let op = cyclic_shift_power(0.0, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_vec(&mut rng, 8);
        assert_eq!(op.apply(&x).unwrap(), x);
    }

    #[test]
    fn cyclic_shift_one_step() {
        let op = cyclic_shift_power(1.0, 4).unwrap();
        let y = op.apply(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(y, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        // Matches the explicit shift matrix: ones on the subdiagonal and top-right.
        let d = op.to_dense().unwrap();
        for r in 0..4 {
            for col in 0..4 {
                let expect = if r == (col + 1) % 4 { 1.0 } else { 0.0 };
                assert!((d[(r, col)] - c(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn cyclic_shift_half_matches_eigen_oracle() {
        let op = cyclic_shift_power(0.5, 4).unwrap();
        let d = op.to_dense().unwrap();
        let x = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let fast = op.apply(&x).unwrap();
        assert!(rel_err(&fast, &dense_apply(&d, &x)) < 1e-10);
        // Hand-expanded kernel: (1/4) Σ_m e^{j2πm(n-0.5)/4}.
        for (n, v) in fast.iter().enumerate() {
            let expect: C64 = (0..4)
                .map(|m| C64::from_polar(0.25, 2.0 * PI * m as f64 * (n as f64 - 0.5) / 4.0))
                .sum();
            assert!((v - expect).norm() < 1e-12);
        }
        assert!((energy(&fast) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cyclic_shift_fast_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &x in &[0.3, -1.7, 2.25, 5.0, -3.0] {
            let op = cyclic_shift_power(x, 24).unwrap();
            let d = op.to_dense().unwrap();
            let v = random_vec(&mut rng, 24);
            assert!(rel_err(&op.apply(&v).unwrap(), &dense_apply(&d, &v)) < 1e-10);
        }
    }

    #[test]
    fn integer_shift_has_no_leakage() {
        let op = cyclic_shift_power(-3.0, 16).unwrap();
        let d = op.to_dense().unwrap();
        for col in 0..16 {
            let target = (col + 16 - 3) % 16;
            for r in 0..16 {
                let expect = if r == target { 1.0 } else { 0.0 };
                assert!((d[(r, col)] - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn doppler_phase_examples() {
        let id = doppler_phase_power(0.0, 5).unwrap();
        assert!(id.diagonal().iter().all(|v| *v == c(1.0, 0.0)));

        let d = doppler_phase_power(1.0, 2).unwrap();
        assert!((d.diagonal()[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((d.diagonal()[1] - c(-1.0, 0.0)).norm() < 1e-15);

        let d = doppler_phase_power(2.5, 4).unwrap();
        let expect = C64::from_polar(1.0, PI * 2.5);
        assert!((d.diagonal()[2] - expect).norm() < 1e-14);
        assert!(d.diagonal().iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn sizes_validated() {
        assert!(cyclic_shift_power(1.0, 0).is_err());
        assert!(doppler_phase_power(1.0, 0).is_err());
        assert!(cyclic_shift_power(f64::NAN, 4).is_err());
        assert!(check_dense(MAX_DENSE_DIM + 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cyclic_shift_group_property(a in -6.0f64..6.0, b in -6.0f64..6.0, seed in any::<u64>()) {
            let size = 20;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_vec(&mut rng, size);
            let ab = cyclic_shift_power(a, size).unwrap()
                .apply(&cyclic_shift_power(b, size).unwrap().apply(&x).unwrap()).unwrap();
            let sum = cyclic_shift_power(a + b, size).unwrap().apply(&x).unwrap();
            prop_assert!(rel_err(&ab, &sum) < 1e-10);
        }

        #[test]
        fn doppler_group_property(a in -6.0f64..6.0, b in -6.0f64..6.0) {
            let size = 20;
            let da = doppler_phase_power(a, size).unwrap();
            let db = doppler_phase_power(b, size).unwrap();
            let dab = doppler_phase_power(a + b, size).unwrap();
            for i in 0..size {
                let lhs = da.diagonal()[i] * db.diagonal()[i];
                prop_assert!((lhs - dab.diagonal()[i]).norm() < 1e-12);
            }
        }
    }
}
