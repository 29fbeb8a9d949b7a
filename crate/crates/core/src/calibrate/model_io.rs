use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::fit::FitDiagnostics;
use super::noise::NoiseModel;
use super::prior::{prior_pmf, PriorFamily, PriorModel};
use crate::error::{Error, Result};

/// JSON form of a fitted prior together with the noise model it was fitted
/// against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub family: String,
    pub parameters: BTreeMap<String, f64>,
    /// `[k_min, k_max]`.
    pub support: [u64; 2],
    /// Noise variance.
    pub variance: f64,
    pub n: u64,
    /// Absent when the noise variance was given directly.
    pub epsilon: Option<f64>,
    pub l: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<String>,
    /// Probabilities of a tabulated prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmf: Option<Vec<f64>>,
    #[serde(default)]
    pub diagnostics: FitDiagnostics,
    /// Free-form run metadata (tool version, inputs, seed).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl ModelDocument {
    pub fn new(
        prior: &PriorModel,
        noise: &NoiseModel,
        n: u64,
        epsilon: impl Into<Option<f64>>,
        l: usize,
    ) -> Self {
        let mut parameters = BTreeMap::new();
        let mut pmf = None;
        match prior.family() {
            PriorFamily::PowerLaw { alpha } => {
                parameters.insert("alpha".to_string(), alpha);
            }
            PriorFamily::Gaussian { mu, sigma2 } => {
                parameters.insert("mu".to_string(), mu);
                parameters.insert("sigma2".to_string(), sigma2);
            }
            PriorFamily::Tabulated => pmf = Some(prior.pmf().to_vec()),
        }
        ModelDocument {
            family: prior.family().name().to_string(),
            parameters,
            support: [prior.k_min(), prior.k_max()],
            variance: noise.variance(),
            n,
            epsilon: epsilon.into(),
            l,
            protocol: None,
            pmf,
            diagnostics: FitDiagnostics::default(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn with_protocol(mut self, protocol: impl Into<String>) -> Self {
        self.protocol = Some(protocol.into());
        self
    }

    pub fn with_diagnostics(mut self, diagnostics: FitDiagnostics) -> Self {
        self.diagnostics = diagnostics;
        self
    }

    pub fn with_provenance(mut self, provenance: BTreeMap<String, String>) -> Self {
        self.provenance = provenance;
        self
    }

    fn parameter(&self, name: &str) -> Result<f64> {
        self.parameters.get(name).copied().ok_or_else(|| {
            Error::Format(format!(
                "{} model is missing parameter '{name}'",
                self.family
            ))
        })
    }

    /// Rebuilds the prior on the recorded support.
    pub fn prior(&self) -> Result<PriorModel> {
        let [k_min, k_max] = self.support;
        match self.family.as_str() {
            "power-law" => prior_pmf(
                PriorFamily::PowerLaw {
                    alpha: self.parameter("alpha")?,
                },
                k_min,
                k_max,
            ),
            "gaussian" => prior_pmf(
                PriorFamily::Gaussian {
                    mu: self.parameter("mu")?,
                    sigma2: self.parameter("sigma2")?,
                },
                k_min,
                k_max,
            ),
            "tabulated" => {
                let pmf = self
                    .pmf
                    .clone()
                    .ok_or_else(|| Error::Format("tabulated model has no pmf".into()))?;
                if pmf.len() as u64 != k_max.saturating_sub(k_min) + 1 {
                    return Err(Error::Format(
                        "tabulated pmf length does not match its support".into(),
                    ));
                }
                PriorModel::from_weights(k_min, pmf)
            }
            other => Err(Error::Format(format!("unknown prior family '{other}'"))),
        }
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.variance)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}
