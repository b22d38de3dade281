//! Real 2π-periodic fields stored as truncated Fourier series.
//!
//! A [`SpectralField`] of order `N` holds the coefficients `a_n`, `n = -N..=N`,
//! of `f(θ) = Σ a_n e^{inθ}` with the conjugate symmetry `a_{-n} = conj(a_n)`.
//! Products are evaluated pseudospectrally on grids large enough that the
//! retained coefficients are exact (no aliasing).
//!
//! Norm convention: `‖f‖²_{L²} = 2π Σ |a_n|²`, so `‖sin θ‖_{L²} = √π`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const SNAPSHOT_MAGIC: &[u8; 4] = b"TFLM";
const SNAPSHOT_VERSION: u32 = 1;

/// Derivative order of a Sobolev (semi)norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SobolevIndex(pub u32);

/// Which Sobolev norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `sqrt(2π Σ_{n≠0} n^{2k} |a_n|²)`
    Homogeneous,
    /// `sqrt(2π Σ_n (1+n²)^k |a_n|²)`
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    order: usize,
    coeffs: Vec<Complex64>,
}

/// Fourier symbol of the linearised canonical operator: `-c³(n⁴ - n²)`.
pub fn linear_symbol(n: i64, c: f64) -> f64 {
    let n2 = (n * n) as f64;
    -c.powi(3) * (n2 * n2 - n2)
}

/// Smallest integer `>= min` of the form 2^a 3^b 5^c.
pub fn fft_size(min: usize) -> usize {
    let mut m = min.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<usize, PlanPair>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plans(m: usize) -> PlanPair {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        if let Some(p) = cache.get(&m) {
            return p.clone();
        }
        let pair = (planner.plan_fft_forward(m), planner.plan_fft_inverse(m));
        cache.insert(m, pair.clone());
        pair
    })
}

/// Fourier coefficients `c_k`, `|k| <= kmax`, of grid samples on `θ_j = 2πj/m`.
/// Requires `m > 2 kmax`. Index `k + kmax`.
pub(crate) fn grid_to_coeffs(values: &[f64], kmax: usize) -> Vec<Complex64> {
    let m = values.len();
    assert!(m > 2 * kmax, "grid of {m} points cannot resolve |k| <= {kmax}");
    let (fwd, _) = plans(m);
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * kmax + 1];
    out[kmax] = Complex64::new(buf[0].re * scale, 0.0);
    for k in 1..=kmax {
        // average the two halves so that the result is exactly conjugate-symmetric
        let pos = buf[k] * scale;
        let neg = buf[m - k].conj() * scale;
        let a = (pos + neg) * 0.5;
        out[kmax + k] = a;
        out[kmax - k] = a.conj();
    }
    out
}

impl SpectralField {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * order + 1],
        }
    }

    pub fn constant(order: usize, value: f64) -> Self {
        let mut f = Self::zeros(order);
        f.coeffs[order] = Complex64::new(value, 0.0);
        f
    }

    /// Builds a field from `2N+1` coefficients ordered `n = -N..=N`.
    ///
    /// The input is symmetrised, `a_n <- (a_n + conj(a_{-n}))/2`, so small
    /// violations of the reality constraint are projected away.
    pub fn from_coeffs(order: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != 2 * order + 1 {
            return Err(Error::BadCoefficientLength {
                len: coeffs.len(),
                expected: 2 * order + 1,
            });
        }
        let mut f = Self { order, coeffs };
        f.symmetrize();
        Ok(f)
    }

    /// `mean + Σ amp·cos(kθ + phase)` over the given `(k, amp, phase)` triples.
    pub fn from_modes(order: usize, mean: f64, modes: &[(usize, f64, f64)]) -> Result<Self> {
        let mut f = Self::constant(order, mean);
        for &(k, amp, phase) in modes {
            if k == 0 || k > order {
                return Err(crate::error::invalid(
                    "mode",
                    format!("wavenumber {k} outside 1..={order}"),
                ));
            }
            let z = Complex64::from_polar(0.5 * amp, phase);
            let cur = f.coeff(k as i64);
            f.set_mode(k as i64, cur + z);
        }
        Ok(f)
    }

    /// Samples `func` on a fine grid and keeps the first `order` harmonics.
    pub fn from_fn(order: usize, func: impl Fn(f64) -> f64) -> Self {
        let m = fft_size(8 * order + 16);
        let values: Vec<f64> = (0..m)
            .map(|j| func(2.0 * PI * j as f64 / m as f64))
            .collect();
        Self {
            order,
            coeffs: grid_to_coeffs(&values, order),
        }
    }

    /// Truncates grid samples (on `θ_j = 2πj/m`) to `order` harmonics.
    pub fn from_grid(order: usize, values: &[f64]) -> Self {
        Self {
            order,
            coeffs: grid_to_coeffs(values, order),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient `a_n`; zero outside the truncation.
    pub fn coeff(&self, n: i64) -> Complex64 {
        if n.unsigned_abs() as usize > self.order {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[(n + self.order as i64) as usize]
    }

    /// Sets `a_n = z` and `a_{-n} = conj(z)`. For `n = 0` only the real part is kept.
    pub fn set_mode(&mut self, n: i64, z: Complex64) {
        let k = n.unsigned_abs() as usize;
        assert!(k <= self.order, "mode {n} outside truncation {}", self.order);
        let o = self.order;
        if k == 0 {
            self.coeffs[o] = Complex64::new(z.re, 0.0);
        } else if n > 0 {
            self.coeffs[o + k] = z;
            self.coeffs[o - k] = z.conj();
        } else {
            self.coeffs[o - k] = z;
            self.coeffs[o + k] = z.conj();
        }
    }

    fn symmetrize(&mut self) {
        let o = self.order;
        self.coeffs[o].im = 0.0;
        for k in 1..=o {
            let a = (self.coeffs[o + k] + self.coeffs[o - k].conj()) * 0.5;
            self.coeffs[o + k] = a;
            self.coeffs[o - k] = a.conj();
        }
    }

    /// Mean value `a_0`.
    pub fn mean(&self) -> f64 {
        self.coeffs[self.order].re
    }

    /// `∫_T f = 2π a_0`.
    pub fn mass(&self) -> f64 {
        2.0 * PI * self.mean()
    }

    /// Point evaluation.
    pub fn eval(&self, theta: f64) -> f64 {
        let mut s = self.mean();
        for k in 1..=self.order {
            let a = self.coeffs[self.order + k];
            let (sin, cos) = (k as f64 * theta).sin_cos();
            s += 2.0 * (a.re * cos - a.im * sin);
        }
        s
    }

    /// Values on the uniform grid `θ_j = 2πj/m`, `j = 0..m`.
    pub fn to_grid(&self, m: usize) -> Vec<f64> {
        assert!(m > 0);
        let (_, inv) = plans(m);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (i, a) in self.coeffs.iter().enumerate() {
            let n = i as i64 - self.order as i64;
            buf[n.rem_euclid(m as i64) as usize] += a;
        }
        inv.process(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Copy with a different truncation order (zero-padded or truncated).
    pub fn with_order(&self, order: usize) -> Self {
        let mut out = Self::zeros(order);
        let k = order.min(self.order) as i64;
        for n in -k..=k {
            out.coeffs[(n + order as i64) as usize] = self.coeff(n);
        }
        out
    }

    /// Multiplies coefficient `n` by `symbol(n)`. The symbol must satisfy
    /// `symbol(-n) = conj(symbol(n))` for the result to stay real.
    pub fn apply_symbol(&self, symbol: impl Fn(i64) -> Complex64) -> Self {
        let o = self.order as i64;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| a * symbol(i as i64 - o))
            .collect();
        Self {
            order: self.order,
            coeffs,
        }
    }

    /// `∂θ^order f`: coefficient `n` is multiplied by `(in)^order`.
    pub fn derivative(&self, order: u32) -> Self {
        self.apply_symbol(|n| Complex64::new(0.0, n as f64).powu(order))
    }

    /// Exact truncated product (alias-free pseudospectral evaluation).
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::TruncationMismatch {
                left: self.order,
                right: other.order,
            });
        }
        Ok(pointwise(&[self, other], 2, self.order, |v| v[0] * v[1]))
    }

    /// Projection onto `V0 = span{cos θ, sin θ}`.
    pub fn project_p0(&self) -> Self {
        self.apply_symbol(|n| {
            if n.abs() == 1 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Projection onto `V1`, the orthogonal complement of `V0 ⊕ span{1}`.
    pub fn project_p1(&self) -> Self {
        self.apply_symbol(|n| {
            if n.abs() <= 1 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
    }

    /// The field with its mean removed.
    pub fn fluctuation(&self) -> Self {
        let mut f = self.clone();
        f.coeffs[self.order] = Complex64::new(0.0, 0.0);
        f
    }

    pub fn mean_field(&self) -> Self {
        Self::constant(self.order, self.mean())
    }

    pub fn sobolev_norm(&self, k: SobolevIndex, kind: NormKind) -> Result<f64> {
        if k.0 as usize > 2 * self.order {
            return Err(Error::SobolevIndexTooLarge {
                k: k.0,
                limit: 2 * self.order,
            });
        }
        Ok(self.sobolev_norm_unchecked(k.0, kind))
    }

    pub(crate) fn sobolev_norm_unchecked(&self, k: u32, kind: NormKind) -> f64 {
        let o = self.order as i64;
        let mut s = 0.0;
        for (i, a) in self.coeffs.iter().enumerate() {
            let n = (i as i64 - o) as f64;
            let w = match kind {
                NormKind::Homogeneous => {
                    if n == 0.0 {
                        0.0
                    } else {
                        (n * n).powi(k as i32)
                    }
                }
                NormKind::Full => (1.0 + n * n).powi(k as i32),
            };
            s += w * a.norm_sqr();
        }
        (2.0 * PI * s).sqrt()
    }

    /// `‖f‖_{L²(T)}`.
    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm_unchecked(0, NormKind::Full)
    }

    /// Homogeneous `Ḣ⁴` seminorm, the natural norm of the stability analysis.
    pub fn h4_seminorm(&self) -> f64 {
        self.sobolev_norm_unchecked(4, NormKind::Homogeneous)
    }

    /// `max_n |a_{-n} - conj(a_n)|`, plus `|Im a_0|`.
    pub fn reality_defect(&self) -> f64 {
        let o = self.order;
        let mut d = self.coeffs[o].im.abs();
        for k in 1..=o {
            d = d.max((self.coeffs[o - k] - self.coeffs[o + k].conj()).norm());
        }
        d
    }

    /// Largest coefficient modulus among `|n| >= from`.
    pub fn max_coeff_from(&self, from: usize) -> f64 {
        (from..=self.order)
            .map(|k| self.coeffs[self.order + k].norm())
            .fold(0.0, f64::max)
    }

    /// `g(θ) = f(θ - φ)`.
    pub fn shift(&self, phi: f64) -> Self {
        self.apply_symbol(|n| Complex64::from_polar(1.0, -(n as f64) * phi))
    }

    /// `g(θ) = f(-θ)`.
    pub fn reflect(&self) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.reverse();
        Self {
            order: self.order,
            coeffs,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            order: self.order,
            coeffs: self.coeffs.iter().map(|a| a * s).collect(),
        }
    }

    /// Adds `s` to the mean.
    pub fn add_constant(&self, s: f64) -> Self {
        let mut f = self.clone();
        f.coeffs[self.order].re += s;
        f
    }

    fn zip_with(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(
            self.order, other.order,
            "field arithmetic needs equal truncation"
        );
        Self {
            order: self.order,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| op(*a, *b))
                .collect(),
        }
    }

    /// Binary snapshot: `"TFLM"`, `u32` version, `u32` N, then `(re, im)` f64 pairs
    /// for `n = -N..=N`, all little-endian.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.order as u32).to_le_bytes())?;
        for a in &self.coeffs {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot(format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        r.read_exact(&mut word)?;
        let order = u32::from_le_bytes(word) as usize;
        let mut coeffs = Vec::with_capacity(2 * order + 1);
        let mut buf = [0u8; 8];
        for _ in 0..2 * order + 1 {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf);
            r.read_exact(&mut buf)?;
            let im = f64::from_le_bytes(buf);
            coeffs.push(Complex64::new(re, im));
        }
        Ok(Self { order, coeffs })
    }

    /// CSV export with header `n,re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,re,im")?;
        for (i, a) in self.coeffs.iter().enumerate() {
            let n = i as i64 - self.order as i64;
            writeln!(w, "{n},{:.16e},{:.16e}", a.re, a.im)?;
        }
        Ok(())
    }
}

/// Evaluates `f` pointwise on the inputs and returns the first `out_order`
/// harmonics of the result.
///
/// `degree` is the polynomial degree of `f` in its arguments; the grid holds
/// at least `degree·N + out_order + 1` points so the retained coefficients
/// are free of aliasing. For non-polynomial `f` the result is an interpolant.
pub fn pointwise(
    inputs: &[&SpectralField],
    degree: usize,
    out_order: usize,
    f: impl Fn(&[f64]) -> f64,
) -> SpectralField {
    let n_in = inputs.iter().map(|g| g.order).max().unwrap_or(0);
    let m = fft_size((degree * n_in + out_order + 1).max(2 * out_order + 1));
    let grids: Vec<Vec<f64>> = inputs.iter().map(|g| g.to_grid(m)).collect();
    let mut args = vec![0.0; inputs.len()];
    let values: Vec<f64> = (0..m)
        .map(|j| {
            for (a, g) in args.iter_mut().zip(&grids) {
                *a = g[j];
            }
            f(&args)
        })
        .collect();
    SpectralField::from_grid(out_order, &values)
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

impl Mul<&SpectralField> for f64 {
    type Output = SpectralField;
    fn mul(self, rhs: &SpectralField) -> SpectralField {
        rhs.scale(self)
    }
}
