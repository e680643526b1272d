//! Experiment presets and the plain-text `key = value` config format.
//!
//! ```text
//! # comments and blank lines are ignored
//! model = linear
//! rows = 100000
//! delta = 0
//! data_seed = 20
//! fractions = 0.005, 0.01, 0.02, 0.04, 0.08
//! replications = 1000
//! methods = UNIF, LEV, GRAD, Hessian
//! weightings = IPW
//! levels = 0.9, 0.95
//! seed = 1
//! floor_beta = 0.05
//! pilot_cap = 2000
//! ```
//!
//! Unknown keys are rejected. Missing keys keep the defaults of [`ExperimentConfig::new`].

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sampling::Sampler;
use crate::simulate::experiment::{ExperimentConfig, Weighting};
use crate::simulate::generators::{GeneratorKind, GeneratorSpec};

/// Population size used by every preset.
pub const PRESET_ROWS: usize = 100_000;
const MISSPECIFICATION_LEVELS: [f64; 3] = [0.0, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Linear model, δ = 0, all four samplers, IPW.
    PaperLinear,
    /// Logistic model, δ = 0, UNIF/GRAD/Hessian, IPW.
    PaperLogistic,
    /// Both models at δ ∈ {0, 0.5, 1}, IPW and equal weighting.
    AppendixE,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::PaperLinear, Preset::PaperLogistic, Preset::AppendixE];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperLinear => "paper-linear",
            Preset::PaperLogistic => "paper-logistic",
            Preset::AppendixE => "appendix-e",
        }
    }

    /// The configurations of this preset with labels usable as directory names. The
    /// data seed is derived from `seed` so one flag fixes the whole run.
    pub fn configs(self, replications: usize, seed: u64) -> Vec<(String, ExperimentConfig)> {
        match self {
            Preset::PaperLinear => vec![("linear".into(), base(GeneratorKind::LinearAr, 0.0, replications, seed))],
            Preset::PaperLogistic => vec![("logistic".into(), base(GeneratorKind::LogisticDiag, 0.0, replications, seed))],
            Preset::AppendixE => [GeneratorKind::LinearAr, GeneratorKind::LogisticDiag]
                .iter()
                .flat_map(|&kind| {
                    MISSPECIFICATION_LEVELS.iter().map(move |&delta| {
                        let mut c = base(kind, delta, replications, seed);
                        c.weightings = vec![Weighting::Ipw, Weighting::Equal];
                        (format!("{kind}-delta{delta}"), c)
                    })
                })
                .collect(),
        }
    }
}

fn base(kind: GeneratorKind, delta: f64, replications: usize, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(GeneratorSpec::new(kind, PRESET_ROWS, delta, data_seed(seed)), seed);
    c.replications = replications;
    if kind == GeneratorKind::LogisticDiag {
        c.methods.retain(|m| *m != Sampler::Leverage);
    }
    c
}

/// Seed of the population for master seed `seed`, kept apart from the replication streams.
pub fn data_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown preset {s:?} (expected paper-linear, paper-logistic or appendix-e)")))
    }
}

fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn parse_one<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("{value:?}: {e}"))
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key.trim() {
            "model" => self.generator.kind = value.parse::<GeneratorKind>().map_err(|e| e.to_string())?,
            "rows" => self.generator.n_rows = parse_one(value)?,
            "delta" => self.generator.delta = parse_one(value)?,
            "data_seed" => self.generator.seed = parse_one(value)?,
            "coefficients" => {
                let v: Vec<f64> = parse_list(value)?;
                self.generator.coefficients =
                    v.try_into().map_err(|v: Vec<f64>| format!("need 5 coefficients, got {}", v.len()))?;
            }
            "fractions" => self.fractions = parse_list(value)?,
            "replications" => self.replications = parse_one(value)?,
            "methods" => self.methods = parse_list(value)?,
            "weightings" => self.weightings = parse_list(value)?,
            "levels" => self.confidence_levels = parse_list(value)?,
            "seed" => self.master_seed = parse_one(value)?,
            "floor_beta" => self.floor_beta = parse_one(value)?,
            "pilot_cap" => self.pilot_cap = parse_one(value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Parses a config, starting from the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::new(GeneratorSpec::linear(PRESET_ROWS, 0.0, data_seed(0)), 0);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: lineno + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| parse_err("expected key = value".into()))?;
            config.set(key, value).map_err(parse_err)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Serializes every key; `parse(to_text())` round-trips exactly.
    pub fn to_text(&self) -> String {
        let g = &self.generator;
        let mut s = String::new();
        let _ = writeln!(s, "model = {}", g.kind);
        let _ = writeln!(s, "rows = {}", g.n_rows);
        let _ = writeln!(s, "delta = {:?}", g.delta);
        let _ = writeln!(s, "data_seed = {}", g.seed);
        let _ = writeln!(s, "coefficients = {}", join(&g.coefficients.map(Debug64)));
        let _ = writeln!(s, "fractions = {}", join(&self.fractions.iter().map(|f| Debug64(*f)).collect::<Vec<_>>()));
        let _ = writeln!(s, "replications = {}", self.replications);
        let _ = writeln!(s, "methods = {}", join(&self.methods));
        let _ = writeln!(s, "weightings = {}", join(&self.weightings));
        let _ = writeln!(s, "levels = {}", join(&self.confidence_levels.iter().map(|f| Debug64(*f)).collect::<Vec<_>>()));
        let _ = writeln!(s, "seed = {}", self.master_seed);
        let _ = writeln!(s, "floor_beta = {:?}", self.floor_beta);
        let _ = writeln!(s, "pilot_cap = {}", self.pilot_cap);
        s
    }
}

/// Shortest round-trip float formatting.
struct Debug64(f64);

impl fmt::Display for Debug64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_shape() {
        let lin = Preset::PaperLinear.configs(300, 1);
        assert_eq!(lin.len(), 1);
        assert_eq!(lin[0].1.methods.len(), 4);
        assert_eq!(lin[0].1.fractions.len(), 5);
        assert_eq!(lin[0].1.replications, 300);
        let logi = Preset::PaperLogistic.configs(10, 1);
        assert!(!logi[0].1.methods.contains(&Sampler::Leverage));
        let e = Preset::AppendixE.configs(10, 1);
        assert_eq!(e.len(), 6);
        assert!(e.iter().all(|(_, c)| c.weightings.len() == 2));
        assert_eq!(e[1].0, "linear-delta0.5");
    }

    #[test]
    fn text_round_trip() {
        for preset in Preset::ALL {
            for (_, c) in preset.configs(123, 42) {
                let parsed = ExperimentConfig::parse(&c.to_text()).unwrap();
                assert_eq!(parsed, c);
            }
        }
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = ExperimentConfig::parse("model = linear\n\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = ExperimentConfig::parse("replications\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(ExperimentConfig::parse("fractions = 0.01, 2.0").is_err());
    }

    #[test]
    fn preset_names_parse() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("table-9".parse::<Preset>().is_err());
    }
}
