//! Interface evolution equations and the changes of variables linking them.
//!
//! Every model is written in divergence form
//!
//! ```text
//! h_t = -∂θ [ p·h + q·h²/2 + κ·h³(∂θh + ∂θ³h) ]
//! ```
//!
//! with constant coefficients `(p, q, κ)` ([`FluxCoeffs`]). The mean of `h`
//! is therefore conserved by all of them.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{pointwise, SpectralField};

/// Which cylinder the thin layer wets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    #[default]
    Inner,
    Outer,
}

/// Nondimensional groups of the two-fluid problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// layer thickness over inner radius, d/R₁
    pub eps: f64,
    /// nondimensional surface tension
    pub gamma: f64,
    pub re: f64,
    /// viscosity ratio μ₁/μ₂
    pub mu: f64,
    /// radius ratio R₂/R₁
    pub eta: f64,
    /// density ratio ρ₁/ρ₂ (does not enter the leading-order equations)
    pub zeta: f64,
    pub layer: Layer,
}

impl PhysicalParams {
    /// Builds the parameter set from `b = γε²` instead of `γ`.
    pub fn with_b(eps: f64, b: f64, re: f64, mu: f64, eta: f64, layer: Layer) -> Result<Self> {
        let p = Self {
            eps,
            gamma: b / (eps * eps),
            re,
            mu,
            eta,
            zeta: 1.0,
            layer,
        };
        p.validate()?;
        Ok(p)
    }

    /// `b = γε²`.
    pub fn b(&self) -> f64 {
        self.gamma * self.eps * self.eps
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps", self.eps),
            ("gamma", self.gamma),
            ("re", self.re),
            ("mu", self.mu),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return Err(invalid("eta", format!("must exceed 1, got {}", self.eta)));
        }
        if self.layer == Layer::Inner && self.eps >= self.eta - 1.0 {
            return Err(invalid("eps", "layer thicker than the gap"));
        }
        Ok(())
    }

    /// Factor `A` of the rescaled time: `2η²/(μ(η²−1))` for the inner layer,
    /// `(μη(1+η²) + μ(η²−1))/(η²(η²−1))` for the outer one.
    pub fn time_factor_a(&self) -> f64 {
        let e2 = self.eta * self.eta;
        match self.layer {
            Layer::Inner => 2.0 * e2 / (self.mu * (e2 - 1.0)),
            Layer::Outer => {
                (self.mu * self.eta * (1.0 + e2) + self.mu * (e2 - 1.0)) / (e2 * (e2 - 1.0))
            }
        }
    }
}

/// Dimensional inputs (SI units, `omega` in rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionalInputs {
    /// interfacial tension, N/m
    pub gamma_tilde: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub r1: f64,
    pub r2: f64,
    pub d: f64,
    pub omega: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// Nondimensional groups from dimensional data.
pub fn nondimensionalize(inp: &DimensionalInputs, layer: Layer) -> Result<PhysicalParams> {
    let fields = [
        ("gamma_tilde", inp.gamma_tilde),
        ("rho1", inp.rho1),
        ("rho2", inp.rho2),
        ("r1", inp.r1),
        ("r2", inp.r2),
        ("d", inp.d),
        ("omega", inp.omega),
        ("mu1", inp.mu1),
        ("mu2", inp.mu2),
    ];
    for (name, v) in fields {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be positive, got {v}")));
        }
    }
    if inp.r2 <= inp.r1 {
        return Err(invalid("r2", "outer radius must exceed inner radius"));
    }
    let p = PhysicalParams {
        eps: inp.d / inp.r1,
        gamma: inp.gamma_tilde / (inp.rho2 * inp.r1.powi(3) * inp.omega * inp.omega),
        re: inp.rho2 * inp.omega * inp.r1 * inp.r1 / inp.mu2,
        mu: inp.mu1 / inp.mu2,
        eta: inp.r2 / inp.r1,
        zeta: inp.rho1 / inp.rho2,
        layer,
    };
    p.validate()?;
    Ok(p)
}

/// Constant coefficients of the flux `p·h + q·h²/2 + κ·h³(∂h+∂³h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxCoeffs {
    pub p: f64,
    pub q: f64,
    pub kappa: f64,
}

impl FluxCoeffs {
    /// Speed of the frame in which the linearisation about the constant
    /// `mean` has no transport term.
    pub fn drift_speed(&self, mean: f64) -> f64 {
        self.p + self.q * mean
    }

    /// Same flux seen from the frame moving with `drift_speed(mean)`.
    pub fn comoving(&self, mean: f64) -> Self {
        Self {
            p: -self.q * mean,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum ModelSpec {
    /// `h_t + ∂(h²/2) + ∂(h³(∂h+∂³h)) = 0`
    Canonical,
    /// `h_t + ∂(h³(∂h+∂³h)) = 0`
    SurfaceTensionOnly,
    /// `h_t + m ∂(h²/2) + ∂(h³(∂h+∂³h)) = 0` with `m = 1/(γε²)`.
    Mixed { mixed_coeff: f64 },
    /// Unscaled equation for either layer, in the lab frame.
    PhysicalUnscaled { phys: PhysicalParams },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Mixed { mixed_coeff } if !(*mixed_coeff >= 0.0) => {
                Err(invalid("mixed_coeff", format!("must be >= 0, got {mixed_coeff}")))
            }
            ModelSpec::PhysicalUnscaled { phys } => phys.validate(),
            _ => Ok(()),
        }
    }

    pub fn flux_coeffs(&self) -> FluxCoeffs {
        match self {
            ModelSpec::Canonical => FluxCoeffs {
                p: 0.0,
                q: 1.0,
                kappa: 1.0,
            },
            ModelSpec::SurfaceTensionOnly => FluxCoeffs {
                p: 0.0,
                q: 0.0,
                kappa: 1.0,
            },
            ModelSpec::Mixed { mixed_coeff } => FluxCoeffs {
                p: 0.0,
                q: *mixed_coeff,
                kappa: 1.0,
            },
            ModelSpec::PhysicalUnscaled { phys } => unscaled_coeffs(phys),
        }
    }
}

fn unscaled_coeffs(phys: &PhysicalParams) -> FluxCoeffs {
    let PhysicalParams {
        eps, gamma, re, mu, eta, ..
    } = *phys;
    let e2 = eta * eta;
    match phys.layer {
        Layer::Inner => {
            // h_t + (1-εh)∂h + ε[B ∂(h³(∂h+∂³h)) + A' ∂(h²/2)] = 0
            let a_prime = (mu - 1.0) / mu - (1.0 + e2) / (mu * (e2 - 1.0));
            FluxCoeffs {
                p: 1.0,
                q: eps * (a_prime - 1.0),
                kappa: eps * gamma * eps * eps * re / (3.0 * mu),
            }
        }
        Layer::Outer => {
            // h_t - (1/η + εh/η²)∂h + ε[B ∂(h³(∂h+∂³h)) + C ∂(h²/2)] = 0
            let c = ((1.0 - mu) * (e2 - 1.0) - mu * eta * (1.0 + e2)) / (e2 * (e2 - 1.0));
            FluxCoeffs {
                p: -1.0 / eta,
                q: eps * (c - 1.0 / e2),
                kappa: eps * gamma * eps * eps * re / (3.0 * e2 * eta),
            }
        }
    }
}

/// `(∂h + ∂³h)`.
pub(crate) fn curvature_term(h: &SpectralField) -> SpectralField {
    &h.derivative(1) + &h.derivative(3)
}

/// The flux `p·h + q·h²/2 + κ·h³(∂h+∂³h)`, computed alias-free.
pub fn flux_field(fc: &FluxCoeffs, h: &SpectralField) -> SpectralField {
    let s = curvature_term(h);
    let FluxCoeffs { p, q, kappa } = *fc;
    pointwise(&[h, &s], 4, h.order(), |v| {
        let (h, s) = (v[0], v[1]);
        p * h + 0.5 * q * h * h + kappa * h * h * h * s
    })
}

pub(crate) fn rhs_with(fc: &FluxCoeffs, h: &SpectralField) -> SpectralField {
    if h.max_coeff_from(1) == 0.0 {
        return SpectralField::zeros(h.order());
    }
    -&flux_field(fc, h).derivative(1)
}

/// `h_t` for the selected model.
pub fn rhs(model: &ModelSpec, h: &SpectralField) -> SpectralField {
    rhs_with(&model.flux_coeffs(), h)
}

/// `h_t` of the unscaled equation for a film on the outer cylinder.
pub fn rhs_unscaled_outer(phys: &PhysicalParams, h: &SpectralField) -> Result<SpectralField> {
    if phys.layer != Layer::Outer {
        return Err(Error::WrongLayer);
    }
    Ok(rhs_with(&unscaled_coeffs(phys), h))
}

/// Change of variables `h = λ h̄(θ̄, t̄)`, `θ̄ = σθ + drift·t`, `t̄ = time_scale·t`,
/// with `σ = -1` when `reflect` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub lambda: f64,
    pub reflect: bool,
    pub drift: f64,
    pub time_scale: f64,
}

impl FrameTransform {
    pub fn identity() -> Self {
        Self {
            lambda: 1.0,
            reflect: false,
            drift: 0.0,
            time_scale: 1.0,
        }
    }

    fn sigma(&self) -> f64 {
        if self.reflect {
            -1.0
        } else {
            1.0
        }
    }

    /// Maps a lab-frame field at lab time `t` to `(h̄, t̄)`.
    pub fn apply(&self, h: &SpectralField, t: f64) -> (SpectralField, f64) {
        let sigma = self.sigma();
        let n = h.order() as i64;
        let mut out = SpectralField::zeros(h.order());
        // b_{σn} = a_n e^{-inσ·drift·t} / λ
        for k in 0..=n {
            let b = h.coeff(k) * Complex64::from_polar(1.0, -(k as f64) * sigma * self.drift * t)
                / self.lambda;
            let target = if self.reflect { -k } else { k };
            out.set_mode(target, b);
        }
        (out, self.time_scale * t)
    }

    /// Inverse of [`FrameTransform::apply`].
    pub fn invert(&self, hbar: &SpectralField, tbar: f64) -> (SpectralField, f64) {
        let t = tbar / self.time_scale;
        let sigma = self.sigma();
        let n = hbar.order() as i64;
        let mut out = SpectralField::zeros(hbar.order());
        for k in 0..=n {
            let src = if self.reflect { -k } else { k };
            let a = hbar.coeff(src)
                * Complex64::from_polar(1.0, (k as f64) * sigma * self.drift * t)
                * self.lambda;
            out.set_mode(k, a);
        }
        (out, t)
    }
}

/// Free function form of [`FrameTransform::apply`].
pub fn apply_transform(tr: &FrameTransform, h: &SpectralField, t: f64) -> (SpectralField, f64) {
    tr.apply(h, t)
}

/// Maps the unscaled equation (with `γ = b/ε²`) to the canonical one.
///
/// Inner layer: `λ² = 6η²/(Re(η²−1)b)`, `θ̄ = −θ + t`, `t̄ = 2η²λε t/(μ(η²−1))`.
/// Outer layer: `λ² = 3A η³/(b Re)`, `θ̄ = −θ − t/η`, `t̄ = εAλ t`.
pub fn canonical_transform(phys: &PhysicalParams) -> Result<FrameTransform> {
    phys.validate()?;
    let fc = unscaled_coeffs(phys);
    // the transport term cancels in the frame θ̄ = −θ + p t; the h²/2 and h³
    // terms are balanced by λ² = −q/κ and t̄ = −qλ t
    let lambda = (-fc.q / fc.kappa).sqrt();
    debug_assert!(lambda.is_finite());
    Ok(FrameTransform {
        lambda,
        reflect: true,
        drift: fc.p,
        time_scale: -fc.q * lambda,
    })
}

/// Scaling for `γ ≫ 1/ε²`: maps the unscaled inner equation to
/// [`ModelSpec::Mixed`] with `mixed_coeff = 1/(γε²)`.
pub fn large_tension_transform(phys: &PhysicalParams) -> Result<(FrameTransform, ModelSpec)> {
    phys.validate()?;
    if phys.layer != Layer::Inner {
        return Err(invalid("layer", "large-tension scaling is defined for the inner layer"));
    }
    let e2 = phys.eta * phys.eta;
    let lambda = (6.0 * e2 / (phys.re * (e2 - 1.0))).sqrt();
    let time_scale =
        2.0 * e2 * lambda * phys.eps.powi(3) * phys.gamma / (phys.mu * (e2 - 1.0));
    Ok((
        FrameTransform {
            lambda,
            reflect: true,
            drift: 1.0,
            time_scale,
        },
        ModelSpec::Mixed {
            mixed_coeff: 1.0 / phys.b(),
        },
    ))
}

/// `(2π)`-periodic wrap into `(-π, π]`.
pub(crate) fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}
