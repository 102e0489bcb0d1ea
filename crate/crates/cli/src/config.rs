//! Experiment configuration: an optional JSON file overridden by flags.

use anyhow::{bail, Context, Result};
use clap::Args;
use lowlying::testfn::PhiKind;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Flags shared by every subcommand. Each is optional so that a config file
/// can supply it; flags win over the file.
#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct Overrides {
    /// Family scale Q (repeat for a sweep).
    #[arg(long = "Q", value_name = "INT", global = true)]
    #[serde(rename = "Q", default)]
    pub big_q: Vec<u64>,
    /// Even weight k ≥ 4.
    #[arg(long, global = true)]
    pub k: Option<u32>,
    /// Support radius σ of Φ̂.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Test function Φ.
    #[arg(long, value_parser = parse_phi, global = true)]
    #[serde(default, deserialize_with = "phi_from_config")]
    pub phi: Option<PhiKind>,
    /// Left end of the support of Ψ.
    #[arg(long = "psi-a", global = true)]
    pub psi_a: Option<f64>,
    /// Right end of the support of Ψ.
    #[arg(long = "psi-b", global = true)]
    pub psi_b: Option<f64>,
    /// Target truncation tail.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Largest modulus any truncated e-sum may reach.
    #[arg(long = "modulus-cap", global = true)]
    pub modulus_cap: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    /// Sequential reduction and byte-identical output.
    #[arg(long, global = true)]
    #[serde(default)]
    pub deterministic: bool,
    /// Output file (stdout if absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

fn parse_phi(s: &str) -> std::result::Result<PhiKind, String> {
    match s {
        "fejer" => Ok(PhiKind::Fejer),
        "bump" | "smooth_bump" => Ok(PhiKind::SmoothBump),
        other => Err(format!("unknown test function '{other}' (expected fejer or bump)")),
    }
}

fn phi_from_config<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<PhiKind>, D::Error> {
    let name = String::deserialize(d)?;
    parse_phi(&name).map(Some).map_err(serde::de::Error::custom)
}

/// Fully resolved settings, echoed at the start of every run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    #[serde(rename = "Q")]
    pub big_q: Vec<u64>,
    pub k: u32,
    pub sigma: f64,
    pub phi: PhiKind,
    pub psi_a: f64,
    pub psi_b: f64,
    pub eps: f64,
    pub modulus_cap: u64,
    pub parallel: usize,
    pub deterministic: bool,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Merge the config file (if any) under the flags and validate ranges.
    pub fn resolve(flags: &Overrides, file: Option<&Path>) -> Result<Self> {
        let base = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str::<Overrides>(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => Overrides::default(),
        };
        let pick_q = if flags.big_q.is_empty() { base.big_q } else { flags.big_q.clone() };
        let cfg = Self {
            big_q: if pick_q.is_empty() { vec![64] } else { pick_q },
            k: flags.k.or(base.k).unwrap_or(12),
            sigma: flags.sigma.or(base.sigma).unwrap_or(1.0),
            phi: flags.phi.or(base.phi).unwrap_or(PhiKind::Fejer),
            psi_a: flags.psi_a.or(base.psi_a).unwrap_or(1.0),
            psi_b: flags.psi_b.or(base.psi_b).unwrap_or(2.0),
            eps: flags.eps.or(base.eps).unwrap_or(1e-8),
            modulus_cap: flags.modulus_cap.or(base.modulus_cap).unwrap_or(16384),
            parallel: flags.parallel.or(base.parallel).unwrap_or(1),
            deterministic: flags.deterministic || base.deterministic,
            out: flags.out.clone().or(base.out),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.k < 4 || self.k % 2 == 1 {
            bail!("--k must be an even integer ≥ 4, got {}", self.k);
        }
        if let Some(q) = self.big_q.iter().find(|&&q| q < 4) {
            bail!("--Q must be at least 4, got {q}");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            bail!("--sigma must be positive, got {}", self.sigma);
        }
        if !(self.psi_a > 0.0 && self.psi_a < self.psi_b && self.psi_b.is_finite()) {
            bail!("Ψ support needs 0 < psi-a < psi-b, got [{}, {}]", self.psi_a, self.psi_b);
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            bail!("--eps must lie in (0, 1), got {}", self.eps);
        }
        if self.parallel == 0 {
            bail!("--parallel needs at least one worker");
        }
        Ok(())
    }

    /// Worker count after the deterministic flag is applied.
    pub fn workers(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.parallel
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_and_validate() {
        let cfg = ExperimentConfig::resolve(&Overrides::default(), None).unwrap();
        assert_eq!((cfg.big_q.as_slice(), cfg.k, cfg.phi), (&[64u64][..], 12, PhiKind::Fejer));
        assert_eq!((cfg.eps, cfg.modulus_cap, cfg.workers()), (1e-8, 16384, 1));
    }

    #[test]
    fn deterministic_forces_one_worker() {
        let flags = Overrides { parallel: Some(4), deterministic: true, ..Default::default() };
        assert_eq!(ExperimentConfig::resolve(&flags, None).unwrap().workers(), 1);
        let flags = Overrides { parallel: Some(4), ..Default::default() };
        assert_eq!(ExperimentConfig::resolve(&flags, None).unwrap().workers(), 4);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let bad = [
            Overrides { k: Some(7), ..Default::default() },
            Overrides { k: Some(2), ..Default::default() },
            Overrides { big_q: vec![3], ..Default::default() },
            Overrides { sigma: Some(0.0), ..Default::default() },
            Overrides { psi_a: Some(2.0), psi_b: Some(1.0), ..Default::default() },
            Overrides { eps: Some(1.0), ..Default::default() },
            Overrides { parallel: Some(0), ..Default::default() },
        ];
        for flags in bad {
            assert!(ExperimentConfig::resolve(&flags, None).is_err(), "{flags:?}");
        }
    }

    #[test]
    fn phi_names() {
        assert_eq!(parse_phi("fejer"), Ok(PhiKind::Fejer));
        assert_eq!(parse_phi("bump"), Ok(PhiKind::SmoothBump));
        assert!(parse_phi("gauss").is_err());
    }
}
