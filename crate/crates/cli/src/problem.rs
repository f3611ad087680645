//! JSON problem files.
//!
//! ```json
//! {
//!   "lattice": {"a": 1, "q": 2, "n_points": 12},
//!   "order": 1,
//!   "lagrangian": "-(u2^2)",
//!   "initial_conditions": [1],
//!   "horizon": {"k_hi": 4, "sample_indices": [1, 2, 3]},
//!   "tolerances": {"root_tol": 1e-10, "grad_tol": 1e-8, "gap_tol": 1e-8, "tail_tol": 1e-9}
//! }
//! ```
//!
//! `sample_indices` and every tolerance are optional. Unknown fields are
//! rejected at every level.

use serde::{Deserialize, Serialize};

use qvar_core::solver::{ProblemSpec, Tolerances};
use qvar_core::variational::Lagrangian;
use qvar_core::{parse_expression, QLattice};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub a: f64,
    pub q: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub k_hi: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_indices: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_tol: Option<f64>,
}

impl TolerancesSection {
    fn resolve(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            root_tol: self.root_tol.unwrap_or(d.root_tol),
            grad_tol: self.grad_tol.unwrap_or(d.grad_tol),
            gap_tol: self.gap_tol.unwrap_or(d.gap_tol),
            tail_tol: self.tail_tol.unwrap_or(d.tail_tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub lattice: LatticeSection,
    pub order: usize,
    pub lagrangian: String,
    pub initial_conditions: Vec<f64>,
    pub horizon: HorizonSection,
    #[serde(default)]
    pub tolerances: TolerancesSection,
}

impl ProblemFile {
    /// Fully resolved file for a spec: defaults and sample indices written out.
    pub fn from_spec(spec: &ProblemSpec) -> Self {
        let t = spec.tolerances;
        ProblemFile {
            lattice: LatticeSection {
                a: spec.lattice.base(),
                q: spec.lattice.ratio(),
                n_points: spec.lattice.n_points(),
            },
            order: spec.order(),
            lagrangian: spec.lagrangian.ast().to_string(),
            initial_conditions: spec.alphas.clone(),
            horizon: HorizonSection {
                k_hi: spec.horizon.k_hi,
                sample_indices: Some(spec.horizon.sample_indices.clone()),
            },
            tolerances: TolerancesSection {
                root_tol: Some(t.root_tol),
                grad_tol: Some(t.grad_tol),
                gap_tol: Some(t.gap_tol),
                tail_tol: Some(t.tail_tol),
            },
        }
    }

    pub fn into_spec(self) -> Result<ProblemSpec, CliError> {
        let invalid = |e: qvar_core::Error| CliError::Validation(e.to_string());
        let l = &self.lattice;
        if !l.a.is_finite() || !l.q.is_finite() {
            return Err(CliError::Validation(
                "lattice parameters must be finite".into(),
            ));
        }
        if self.order == 0 {
            return Err(CliError::Validation("order must be at least 1".into()));
        }
        if self.initial_conditions.len() != self.order {
            return Err(CliError::Validation(format!(
                "initial_conditions has {} entries but order is {}",
                self.initial_conditions.len(),
                self.order
            )));
        }
        let lattice = QLattice::new(l.a, l.q, l.n_points).map_err(invalid)?;
        let ast = parse_expression(&self.lagrangian, self.order).map_err(|e| match e {
            qvar_core::Error::Arity { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Parse(format!("lagrangian: {e}")),
        })?;
        ProblemSpec::new(
            lattice,
            Lagrangian::new(ast),
            self.initial_conditions,
            self.horizon.k_hi,
            self.horizon.sample_indices,
            self.tolerances.resolve(),
        )
        .map_err(invalid)
    }
}

pub fn load_problem(text: &str) -> Result<ProblemSpec, CliError> {
    let file: ProblemFile =
        serde_json::from_str(text).map_err(|e| CliError::Parse(format!("problem file: {e}")))?;
    file.into_spec()
}

/// Serialises a spec so that [`load_problem`] reproduces it.
pub fn emit_problem(spec: &ProblemSpec) -> String {
    let mut s = serde_json::to_string_pretty(&ProblemFile::from_spec(spec))
        .expect("problem files always serialise");
    s.push('\n');
    s
}
