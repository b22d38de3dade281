//! Run configuration files.
//!
//! A configuration is a TOML document with the sections `[model]`,
//! `[initial]`, `[numerics]`, `[fit]`, `[steady]`, `[nondim]` and `[output]`.
//! Unknown keys are rejected. The grammar is documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use tfilm_core::evolution::{IntegratorConfig, Sampling};
use tfilm_core::manifold::FitWindow;
use tfilm_core::models::{DimensionalInputs, Layer, ModelSpec, PhysicalParams};
use tfilm_core::steady::{Constraint, SteadyProblem, SteadyVariant};
use tfilm_core::SpectralField;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelSection,
    pub initial: Option<InitialSection>,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub fit: FitSection,
    pub steady: Option<SteadySection>,
    pub nondim: Option<NondimSection>,
    #[serde(default)]
    pub output: OutputSection,
    /// directory of the configuration file; relative paths resolve against it
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    #[default]
    Canonical,
    SurfaceTensionOnly,
    Mixed,
    PhysicalUnscaled,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub variant: VariantName,
    pub mixed_coeff: Option<f64>,
    pub eps: Option<f64>,
    pub gamma: Option<f64>,
    /// `γε²`, an alternative to `gamma`
    pub b: Option<f64>,
    pub re: Option<f64>,
    pub mu: Option<f64>,
    pub eta: Option<f64>,
    pub zeta: Option<f64>,
    pub layer: Option<Layer>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub mean: Option<f64>,
    /// `[n, amplitude, phase]`: `amplitude·cos(nθ + phase)`
    #[serde(default)]
    pub modes: Vec<(usize, f64, f64)>,
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    #[serde(default = "default_order")]
    pub order: usize,
    pub horizon: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub dt_init: Option<f64>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub positivity_floor: Option<f64>,
    pub max_steps: Option<u64>,
    pub snapshot_every: Option<usize>,
    pub sampling: Option<Sampling>,
}

fn default_order() -> usize {
    64
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            order: default_order(),
            horizon: None,
            rtol: None,
            atol: None,
            dt_init: None,
            dt_min: None,
            dt_max: None,
            positivity_floor: None,
            max_steps: None,
            snapshot_every: None,
            sampling: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitPolicy {
    #[default]
    Auto,
    Explicit,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default)]
    pub policy: FitPolicy,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    /// existing trace CSV to fit instead of running a simulation
    pub trace: Option<PathBuf>,
    /// mean about which the laws are fitted; defaults to the run's mean
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyVariantName {
    #[default]
    WithShear,
    SurfaceTensionOnly,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySection {
    #[serde(default)]
    pub variant: SteadyVariantName,
    pub j: Option<f64>,
    pub mean: Option<f64>,
    #[serde(default)]
    pub wave_speed: f64,
    pub h_star: Option<f64>,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub trials: usize,
}

fn default_amplitude() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NondimSection {
    pub gamma_tilde: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub r1: f64,
    pub r2: f64,
    pub d: f64,
    /// rad/s
    pub omega: f64,
    pub mu1: f64,
    pub mu2: f64,
    #[serde(default)]
    pub layer: Layer,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// angular samples per interface frame
    #[serde(default = "default_frame_samples")]
    pub frame_samples: usize,
    /// write the final Fourier coefficients as CSV
    #[serde(default = "yes")]
    pub coefficients: bool,
}

fn default_frame_samples() -> usize {
    720
}

fn yes() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            frame_samples: default_frame_samples(),
            coefficients: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        cfg.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("invalid configuration: {e}"))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn physical(&self) -> Result<PhysicalParams> {
        let m = &self.model;
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| anyhow!("[model] {key} is required for physical parameters"))
        };
        let eps = need(m.eps, "eps")?;
        let gamma = match (m.gamma, m.b) {
            (Some(g), None) => g,
            (None, Some(b)) => b / (eps * eps),
            (Some(_), Some(_)) => bail!("[model] give either gamma or b, not both"),
            (None, None) => bail!("[model] gamma (or b) is required for physical parameters"),
        };
        let p = PhysicalParams {
            eps,
            gamma,
            re: need(m.re, "re")?,
            mu: need(m.mu, "mu")?,
            eta: need(m.eta, "eta")?,
            zeta: m.zeta.unwrap_or(1.0),
            layer: m.layer.unwrap_or_default(),
        };
        p.validate().context("[model]")?;
        Ok(p)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = match self.model.variant {
            VariantName::Canonical => ModelSpec::Canonical,
            VariantName::SurfaceTensionOnly => ModelSpec::SurfaceTensionOnly,
            VariantName::Mixed => ModelSpec::Mixed {
                mixed_coeff: self
                    .model
                    .mixed_coeff
                    .ok_or_else(|| anyhow!("[model] mixed_coeff is required for variant mixed"))?,
            },
            VariantName::PhysicalUnscaled => ModelSpec::PhysicalUnscaled {
                phys: self.physical()?,
            },
        };
        spec.validate().context("[model]")?;
        Ok(spec)
    }

    /// The initial field, or `None` when `[initial]` is absent.
    pub fn initial_field(&self) -> Result<Option<SpectralField>> {
        let Some(init) = &self.initial else {
            return Ok(None);
        };
        let order = self.numerics.order;
        if let Some(path) = &init.snapshot {
            if init.mean.is_some() || !init.modes.is_empty() {
                bail!("[initial] snapshot excludes mean and modes");
            }
            let full = self.resolve(path);
            let file = std::fs::File::open(&full)
                .with_context(|| format!("[initial] snapshot {}", full.display()))?;
            let h = SpectralField::read_snapshot(std::io::BufReader::new(file))
                .with_context(|| format!("[initial] snapshot {}", full.display()))?;
            return Ok(Some(h.with_order(order)));
        }
        let mean = init
            .mean
            .ok_or_else(|| anyhow!("[initial] needs either mean (with modes) or snapshot"))?;
        if let Some(&(n, _, _)) = init.modes.iter().find(|m| m.0 == 0 || m.0 > order) {
            bail!("[initial] mode {n} outside 1..={order}");
        }
        Ok(Some(
            SpectralField::from_modes(order, mean, &init.modes).context("[initial]")?,
        ))
    }

    pub fn integrator(&self) -> Result<IntegratorConfig> {
        let n = &self.numerics;
        let mut cfg = IntegratorConfig::default();
        macro_rules! overlay {
            ($($f:ident),*) => { $(if let Some(v) = n.$f { cfg.$f = v; })* };
        }
        overlay!(rtol, atol, dt_init, dt_min, dt_max, positivity_floor, max_steps, snapshot_every);
        cfg.validate().context("[numerics]")?;
        Ok(cfg)
    }

    pub fn horizon(&self) -> Result<f64> {
        let h = self
            .numerics
            .horizon
            .ok_or_else(|| anyhow!("[numerics] horizon is required"))?;
        if !(h > 0.0 && h.is_finite()) {
            bail!("[numerics] horizon must be positive and finite");
        }
        Ok(h)
    }

    pub fn sampling(&self, horizon: f64) -> Sampling {
        self.numerics.sampling.clone().unwrap_or(Sampling::Uniform {
            interval: horizon / 100.0,
        })
    }

    pub fn fit_window(&self) -> Result<FitWindow> {
        let f = &self.fit;
        match f.policy {
            FitPolicy::Auto => {
                if f.t_min.is_some() || f.t_max.is_some() {
                    bail!("[fit] t_min/t_max need policy = \"explicit\"");
                }
                Ok(FitWindow::Auto)
            }
            FitPolicy::Explicit => match (f.t_min, f.t_max) {
                (Some(t_min), Some(t_max)) if t_min > 0.0 && t_max > t_min => {
                    Ok(FitWindow::Explicit { t_min, t_max })
                }
                (Some(_), Some(_)) => bail!("[fit] need 0 < t_min < t_max"),
                _ => bail!("[fit] policy \"explicit\" requires t_min and t_max"),
            },
        }
    }

    pub fn steady_section(&self) -> Result<&SteadySection> {
        self.steady
            .as_ref()
            .ok_or_else(|| anyhow!("[steady] section is required"))
    }

    /// Problem for the `steady` command and the constant expected near it.
    pub fn steady_problem(&self) -> Result<(SteadyProblem, f64)> {
        let s = self.steady_section()?;
        let variant = match s.variant {
            SteadyVariantName::WithShear => SteadyVariant::WithShear,
            SteadyVariantName::SurfaceTensionOnly => SteadyVariant::SurfaceTensionOnly,
        };
        let (constraint, h_star) = match (s.j, s.mean) {
            (Some(j), None) => {
                if variant == SteadyVariant::SurfaceTensionOnly {
                    bail!("[steady] variant surface_tension_only needs mean, not j");
                }
                if !(j > 0.0) {
                    bail!("[steady] j must be positive");
                }
                let h_star = s.h_star.unwrap_or_else(|| {
                    let c = s.wave_speed;
                    c + (c * c + 2.0 * j).sqrt()
                });
                (Constraint::GivenJ(j), h_star)
            }
            (None, Some(m)) => {
                if !(m > 0.0) {
                    bail!("[steady] mean must be positive");
                }
                (Constraint::GivenMean(m), m)
            }
            _ => bail!("[steady] give exactly one of j and mean"),
        };
        Ok((
            SteadyProblem {
                variant,
                constraint,
                wave_speed: s.wave_speed,
            },
            h_star,
        ))
    }

    pub fn dimensional(&self) -> Result<(DimensionalInputs, Layer)> {
        let n = self
            .nondim
            .as_ref()
            .ok_or_else(|| anyhow!("[nondim] section is required"))?;
        Ok((
            DimensionalInputs {
                gamma_tilde: n.gamma_tilde,
                rho1: n.rho1,
                rho2: n.rho2,
                r1: n.r1,
                r2: n.r2,
                d: n.d,
                omega: n.omega,
                mu1: n.mu1,
                mu2: n.mu2,
            },
            n.layer,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = RunConfig::parse("[model]\nvariant = \"canonical\"\nvarient = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("varient") && err.contains("line 3"), "{err}");
        assert!(RunConfig::parse("[modle]\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::parse(
            r#"
seed = 4
[model]
variant = "mixed"
mixed_coeff = 0.5
[initial]
mean = 1
modes = [[1, 0.05, 0], [2, 0.01, 1.5]]
[numerics]
order = 16
horizon = 10
rtol = 1e-8
sampling = { kind = "geometric", first = 0.1, ratio = 1.5 }
[fit]
policy = "explicit"
t_min = 1
t_max = 10
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.model_spec().unwrap(), ModelSpec::Mixed { mixed_coeff: 0.5 });
        let h = cfg.initial_field().unwrap().unwrap();
        assert_eq!(h.order(), 16);
        assert!((h.eval(0.0) - 1.05 - 0.01 * 1.5f64.cos()).abs() < 1e-15);
        assert_eq!(cfg.integrator().unwrap().rtol, 1e-8);
        assert_eq!(
            cfg.fit_window().unwrap(),
            FitWindow::Explicit {
                t_min: 1.0,
                t_max: 10.0
            }
        );
    }

    #[test]
    fn physical_parameters_need_every_field() {
        let cfg = RunConfig::parse("[model]\nvariant = \"physical_unscaled\"\neps = 0.01\n").unwrap();
        let err = cfg.model_spec().unwrap_err().to_string();
        assert!(err.contains("b"), "{err}");
        let cfg = RunConfig::parse(
            "[model]\nvariant = \"physical_unscaled\"\neps = 0.01\nb = 1\nre = 1\nmu = 1\neta = 2\n",
        )
        .unwrap();
        let ModelSpec::PhysicalUnscaled { phys } = cfg.model_spec().unwrap() else {
            panic!()
        };
        assert!((phys.gamma - 1e4).abs() < 1e-9);
    }

    #[test]
    fn steady_constraints() {
        let cfg = RunConfig::parse("[steady]\nj = 2\n").unwrap();
        let (p, h) = cfg.steady_problem().unwrap();
        assert_eq!(p.constraint, Constraint::GivenJ(2.0));
        assert_eq!(h, 2.0);
        assert!(RunConfig::parse("[steady]\nj = 2\nmean = 1\n")
            .unwrap()
            .steady_problem()
            .is_err());
    }
}
