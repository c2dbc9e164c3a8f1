//! Flat analysis configuration: a JSON file merged with command-line flags.

use std::path::Path;

use gsem::copula::ScenarioCode;
use gsem::inference::BootKind;
use gsem::io::ColumnRoles;
use gsem::marginals::Family;
use gsem::sensitivity::default_grid;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_BOOT_B: usize = 500;
pub const DEFAULT_MC_DRAWS: usize = gsem::estimands::DEFAULT_MC_DRAWS;

/// Every key is optional; flags override file entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub data: Option<String>,
    pub x: Option<String>,
    pub m: Option<String>,
    pub y: Option<String>,
    pub w1: Option<Vec<String>>,
    pub w2: Option<Vec<String>>,
    pub family_x: Option<String>,
    pub family_m: Option<String>,
    pub family_y: Option<String>,
    pub x0: Option<f64>,
    pub x1: Option<f64>,
    /// Covariate values after the intercept: W1 columns, then W2.
    pub profile: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub mc_draws: Option<usize>,
    pub boot_kind: Option<String>,
    pub boot_b: Option<usize>,
    pub rho_grid: Option<Vec<f64>>,
    pub out: Option<String>,
    pub setting: Option<String>,
    pub n: Option<usize>,
    pub n_sims: Option<usize>,
    pub csv: Option<String>,
}

/// A usage problem: bad flags, bad config, or a missing required value.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl AnalysisConfig {
    pub fn from_file(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merged(self, over: AnalysisConfig) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { AnalysisConfig { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            data, x, m, y, w1, w2, family_x, family_m, family_y, x0, x1, profile, seed, mc_draws, boot_kind, boot_b,
            rho_grid, out, setting, n, n_sims, csv
        )
    }

    fn required<'a>(&'a self, v: &'a Option<String>, key: &str) -> Result<&'a str, UsageError> {
        v.as_deref().ok_or_else(|| UsageError(format!("missing required setting `{key}`")))
    }

    pub fn data_path(&self) -> Result<&str, UsageError> {
        self.required(&self.data, "data")
    }

    pub fn roles(&self) -> Result<ColumnRoles, UsageError> {
        let roles = ColumnRoles {
            x: self.required(&self.x, "x")?.to_string(),
            m: self.required(&self.m, "m")?.to_string(),
            y: self.required(&self.y, "y")?.to_string(),
            w1: self.w1.clone().unwrap_or_default(),
            w2: self.w2.clone().unwrap_or_default(),
        };
        roles.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(roles)
    }

    pub fn families(&self) -> Result<[Family; 3], UsageError> {
        let one = |v: &Option<String>| -> Result<Family, UsageError> {
            Family::parse(v.as_deref().unwrap_or("gaussian")).map_err(|e| UsageError(e.to_string()))
        };
        Ok([one(&self.family_x)?, one(&self.family_m)?, one(&self.family_y)?])
    }

    pub fn exposure_levels(&self) -> Result<Option<(f64, f64)>, UsageError> {
        match (self.x0, self.x1) {
            (Some(a), Some(b)) if a == b => Err(UsageError("x0 and x1 must differ".into())),
            (Some(a), Some(b)) => Ok(Some((a, b))),
            (None, None) => Ok(None),
            _ => Err(UsageError("x0 and x1 must be given together".into())),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn mc_draws(&self) -> usize {
        self.mc_draws.unwrap_or(DEFAULT_MC_DRAWS)
    }

    pub fn boot_kind(&self) -> Result<BootKind, UsageError> {
        self.boot_kind.as_deref().unwrap_or("parametric").parse().map_err(|e: gsem::Error| UsageError(e.to_string()))
    }

    pub fn boot_b(&self) -> usize {
        self.boot_b.unwrap_or(DEFAULT_BOOT_B)
    }

    pub fn rho_grid(&self) -> Vec<f64> {
        self.rho_grid.clone().unwrap_or_else(default_grid)
    }

    /// The configuration with every defaulted value filled in, for echoing.
    pub fn resolved(&self) -> Result<AnalysisConfig, UsageError> {
        let fam = self.families()?;
        Ok(AnalysisConfig {
            family_x: Some(fam[0].name().into()),
            family_m: Some(fam[1].name().into()),
            family_y: Some(fam[2].name().into()),
            w1: Some(self.w1.clone().unwrap_or_default()),
            w2: Some(self.w2.clone().unwrap_or_default()),
            seed: Some(self.seed()),
            mc_draws: Some(self.mc_draws()),
            ..self.clone()
        })
    }
}

/// Named simulation presets.
pub fn preset(name: &str, n: usize, seed: u64) -> Result<gsem::simgen::SimSetting, UsageError> {
    use gsem::simgen::SimSetting;
    let bad = || UsageError(format!("unknown setting `{name}`"));
    let scenario = |s: &str| s.to_uppercase().parse::<ScenarioCode>().map_err(|_| bad());
    let out = match name {
        "or-abundant" => SimSetting::odds_ratio(true, n, seed),
        "or-rare" => SimSetting::odds_ratio(false, n, seed),
        _ => match name.split('-').collect::<Vec<_>>().as_slice() {
            [s] => SimSetting::recovery(scenario(s)?, n, seed).map_err(|_| bad())?,
            [s, "sem", "null"] => SimSetting::regression_sem(scenario(s)?, true, n, seed).map_err(|_| bad())?,
            [s, "sem", "nonnull"] => SimSetting::regression_sem(scenario(s)?, false, n, seed).map_err(|_| bad())?,
            _ => return Err(bad()),
        },
    };
    Ok(out)
}

pub const PRESETS: &str = "ccc, cdc, ccd, ccc-sem-null, ccc-sem-nonnull, cdc-sem-null, cdc-sem-nonnull, ccd-sem-null, ccd-sem-nonnull, or-abundant, or-rare";
