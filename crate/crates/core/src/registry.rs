//! Field specifications and the named closures they may reference.
//!
//! Specs are JSON documents. A bare `{}` is the flat standard structure on the
//! cube `[-0.5, 0.5]⁷`; a `warped` fragment replaces the base with a warped
//! model and a `deform` fragment deforms whichever base was built.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chartfield::{Chart, DerivativePolicy, G2Field, PhiFn, ScalarField, Slot, VectorField};
use crate::deform::{conformal_deform, vector_deform};
use crate::error::{Error, Result};
use crate::tensor7::Tensor7;
use crate::warped::{build_warped_field, integrate_model, Branch, HPrimeRule, WarpedModel};

pub const SCALAR_NAMES: [&str; 5] = ["one", "two", "exp_x1", "exp_linear", "gauss_bump"];
pub const VECTOR_NAMES: [&str; 4] = ["zero", "e1", "gauss_bump", "twist"];

fn default_half_width() -> f64 {
    0.5
}

/// Top-level field document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default)]
    pub deform: Option<DeformSpec>,
    #[serde(default)]
    pub warped: Option<WarpedSpec>,
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec {
            half_width: default_half_width(),
            deform: None,
            warped: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DeformSpec {
    Conformal { f: String },
    Vector { v: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpedSpec {
    pub sigma: f64,
    pub h0: f64,
    pub theta0: f64,
    /// `zero`, `case1`, `case2` or `case3`.
    pub hprime: String,
    /// `plus` or `minus`; the case default applies when absent.
    #[serde(default)]
    pub branch: Option<String>,
    #[serde(rename = "A", default)]
    pub a: Option<f64>,
    pub t_span: [f64; 2],
    pub step: f64,
}

impl WarpedSpec {
    pub fn rule(&self) -> Result<HPrimeRule<f64>> {
        let branch = |default: Branch| match self.branch.as_deref() {
            None => Ok(default),
            Some("plus") => Ok(Branch::Plus),
            Some("minus") => Ok(Branch::Minus),
            Some(other) => Err(Error::Spec(format!("unknown branch `{other}`"))),
        };
        match self.hprime.as_str() {
            "zero" => Ok(HPrimeRule::Zero),
            "case1" => Ok(HPrimeRule::Case1),
            "case2" => Ok(HPrimeRule::Case2(branch(Branch::Plus)?)),
            "case3" => {
                let a = self.a.ok_or_else(|| Error::Spec("case3 needs the constant A".into()))?;
                Ok(HPrimeRule::Case3 {
                    a,
                    branch: branch(Branch::Minus)?,
                })
            }
            other => Err(Error::Spec(format!("unknown hprime rule `{other}`"))),
        }
    }

    pub fn model(&self) -> Result<WarpedModel<f64>> {
        integrate_model(self.sigma, self.h0, self.theta0, self.rule()?, self.t_span, self.step)
    }
}

impl FieldSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FieldSpec = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Checks closure names and numeric ranges without building anything.
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) {
            return Err(Error::Spec("half_width must be positive".into()));
        }
        match &self.deform {
            Some(DeformSpec::Conformal { f }) => {
                scalar(f)?;
            }
            Some(DeformSpec::Vector { v }) => {
                vector(v)?;
            }
            None => {}
        }
        if let Some(w) = &self.warped {
            w.rule()?;
            if !(w.step > 0.0) || !(w.t_span[1] > w.t_span[0]) {
                return Err(Error::Spec("warped needs step > 0 and an increasing t_span".into()));
            }
        }
        Ok(())
    }

    /// The base field before any deformation, and the model when warped.
    pub fn build_base(&self) -> Result<(G2Field<f64>, Option<WarpedModel<f64>>)> {
        match &self.warped {
            Some(w) => {
                let m = w.model()?;
                Ok((build_warped_field(&m)?, Some(m)))
            }
            None => Ok((
                G2Field::flat(Chart::cube(self.half_width)).with_policy(DerivativePolicy::central_default()),
                None,
            )),
        }
    }

    /// The fully built field.
    pub fn build(&self) -> Result<G2Field<f64>> {
        let (base, _) = self.build_base()?;
        match &self.deform {
            None => Ok(base),
            Some(DeformSpec::Conformal { f }) => conformal_deform(&base, &scalar(f)?, 64),
            Some(DeformSpec::Vector { v }) => Ok(vector_deform(&base, &vector(v)?)),
        }
    }
}

fn norm2(x: &[f64; 7]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Named positive scalar functions, each with an exact gradient.
pub fn scalar(name: &str) -> Result<ScalarField<f64>> {
    Ok(match name {
        "one" => ScalarField::constant(1.0),
        "two" => ScalarField::constant(2.0),
        "exp_x1" => ScalarField::new(|x: &[f64; 7]| x[0].exp()).with_gradient(|x| {
            let mut g = [0.0; 7];
            g[0] = x[0].exp();
            g
        }),
        "exp_linear" => {
            const K: [f64; 7] = [0.3, -0.2, 0.0, 0.1, 0.0, 0.15, -0.05];
            let lin = |x: &[f64; 7]| (0..7).map(|i| K[i] * x[i]).sum::<f64>();
            ScalarField::new(move |x| lin(x).exp()).with_gradient(move |x| K.map(|k| k * lin(x).exp()))
        }
        "gauss_bump" => ScalarField::new(|x: &[f64; 7]| 1.0 + 0.5 * (-norm2(x) / 0.2).exp()).with_gradient(|x| {
            let e = (-norm2(x) / 0.2).exp();
            x.map(|xi| -5.0 * xi * e)
        }),
        other => return Err(Error::UnknownClosure(other.to_string())),
    })
}

/// Named vector fields, components with an upper index.
pub fn vector(name: &str) -> Result<VectorField<f64>> {
    Ok(match name {
        "zero" => VectorField::zero(),
        "e1" => VectorField::new(Slot::Upper, |_| [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        "gauss_bump" => VectorField::new(Slot::Upper, |x: &[f64; 7]| {
            let e = 0.3 * (-norm2(x) / 0.2).exp();
            [e, 0.5 * e, 0.0, -0.5 * e, 0.2 * e, 0.0, 0.1 * e]
        }),
        "twist" => VectorField::new(Slot::Upper, |x: &[f64; 7]| {
            [-0.3 * x[1], 0.3 * x[0], -0.3 * x[3], 0.3 * x[2], 0.1, 0.0, 0.05 * x[4]]
        }),
        other => return Err(Error::UnknownClosure(other.to_string())),
    })
}

/// Seeded smooth 3-form `χ = b(x) Σ c_I (1 + ⟨k_I, x⟩) e^I` with a Gaussian bump `b`.
///
/// The amplitude keeps `φ₀ + χ` positive on the unit cube.
#[derive(Clone, Debug)]
pub struct BumpChi {
    pub center: [f64; 7],
    pub width: f64,
    pub coeffs: Vec<f64>,
    pub slopes: Vec<[f64; 7]>,
}

impl BumpChi {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = [(); 7].map(|_| rng.gen_range(-0.1..0.1));
        let width = rng.gen_range(0.2..0.4);
        let coeffs = (0..35).map(|_| rng.gen_range(-0.06..0.06)).collect();
        let slopes = (0..35).map(|_| [(); 7].map(|_| rng.gen_range(-0.5..0.5))).collect();
        BumpChi {
            center,
            width,
            coeffs,
            slopes,
        }
    }

    pub fn at(&self, x: &[f64; 7]) -> Tensor7<f64> {
        let d: f64 = (0..7).map(|i| (x[i] - self.center[i]).powi(2)).sum();
        let b = (-d / self.width).exp();
        let mut k = 0;
        Tensor7::form_from_fn(3, |_| {
            let s = &self.slopes[k];
            let lin = 1.0 + (0..7).map(|i| s[i] * x[i]).sum::<f64>();
            let v = b * self.coeffs[k] * lin;
            k += 1;
            v
        })
    }

    pub fn closure(self) -> PhiFn<f64> {
        Arc::new(move |x| self.at(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_flat() {
        let spec = FieldSpec::from_json("{}").unwrap();
        assert_eq!(spec, FieldSpec::default());
        assert!(spec.build().is_ok());
    }

    #[test]
    fn unknown_closure_is_rejected() {
        let r = FieldSpec::from_json(r#"{"deform":{"kind":"conformal","f":"nope"}}"#);
        assert_eq!(r, Err(Error::UnknownClosure("nope".into())));
    }

    #[test]
    fn unknown_field_is_a_spec_error() {
        assert!(matches!(FieldSpec::from_json(r#"{"colour":1}"#), Err(Error::Spec(_))));
    }

    #[test]
    fn gradients_match_differences() {
        let x = [0.1, -0.2, 0.05, 0.0, 0.3, -0.1, 0.2];
        for name in SCALAR_NAMES {
            let f = scalar(name).unwrap();
            let exact = f.gradient(&x, 0.0);
            let fd = ScalarField::new(move |y| f.at(y)).gradient(&x, 1e-5);
            for i in 0..7 {
                assert!((exact[i] - fd[i]).abs() < 1e-8, "{name}");
            }
        }
    }

    #[test]
    fn bump_is_reproducible() {
        let a = BumpChi::seeded(7).at(&[0.1; 7]);
        let b = BumpChi::seeded(7).at(&[0.1; 7]);
        assert_eq!(a, b);
    }
}
