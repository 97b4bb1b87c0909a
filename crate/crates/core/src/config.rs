//! TOML run configuration.
//!
//! The grammar is documented in `docs/formats.md`. Every key is checked:
//! unknown keys are rejected (with a suggestion when one is close), missing
//! required keys are reported by dotted path, and `--override k=v` pairs
//! are applied to the parsed document before interpretation.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::experiments::{CampaignConfig, Studentizer};
use crate::index_scale::{PowerVariationConfig, ScaleMode};
use crate::regressors::RegressorKind;
use crate::sde_sim::{DriftFamily, ModelSpec, SamplingDesign, ScaleFn, ThetaDomain, WeightFn, DEFAULT_DELTA};
use crate::stable_noise::{JumpLaw, JumpSide, LevyConfig, NuisanceSpec};

/// A fully interpreted configuration file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub designs: Vec<SamplingDesign>,
    pub regressor: RegressorKind,
    pub pv: PowerVariationConfig,
    pub scale_mode: ScaleMode,
    pub studentizer: Studentizer,
    pub replications: usize,
    pub seed: u64,
    pub fine_factor: usize,
    /// SHA-256 of the canonical document after overrides.
    pub hash: String,
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn load(file: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(file)?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let hash = canonical_hash(&doc);
        interpret(&doc, hash)
    }

    pub fn campaign(&self, output_dir: Option<PathBuf>) -> CampaignConfig {
        CampaignConfig {
            model: self.model.clone(),
            designs: self.designs.clone(),
            regressor: self.regressor,
            pv: self.pv,
            scale_mode: self.scale_mode,
            studentizer: self.studentizer,
            replications: self.replications,
            base_seed: self.seed,
            fine_factor: self.fine_factor,
            output_dir,
            config_hash: self.hash.clone(),
        }
    }

    /// The first design, used by single-path commands.
    pub fn design(&self) -> &SamplingDesign {
        &self.designs[0]
    }
}

/// Parses `name` as a regressor for `drift`.
pub fn parse_regressor(name: &str, drift: &DriftFamily) -> Result<RegressorKind> {
    let kind = match name {
        "euler" => RegressorKind::Euler,
        "improved-euler" => RegressorKind::ImprovedEuler,
        "exact-linear" => RegressorKind::ExactLinear,
        "exact-bernoulli" => match drift {
            DriftFamily::Bernoulli { kappa } => RegressorKind::ExactBernoulli { kappa: *kappa },
            _ => {
                return Err(Error::invalid("estimate.regressor", "exact-bernoulli pairs only with the Bernoulli drift"))
            }
        },
        other => {
            return Err(Error::invalid(
                "estimate.regressor",
                format!("unknown regressor `{other}`{}", suggest(other, REGRESSORS)),
            ))
        }
    };
    kind.check_pairing(drift)?;
    Ok(kind)
}

const REGRESSORS: &[&str] = &["euler", "improved-euler", "exact-linear", "exact-bernoulli"];

fn suggest(word: &str, candidates: &[&str]) -> String {
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(word, c), c))
        .filter(|(d, _)| *d <= 3)
        .min()
        .map(|(_, c)| format!(" (did you mean `{c}`?)"))
        .unwrap_or_default()
}

fn apply_override(doc: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut t = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        t = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    t.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn flatten(prefix: &str, t: &Table, out: &mut Vec<(String, String)>) {
    for (k, v) in t {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(s) => flatten(&path, s, out),
            other => out.push((path, other.to_string())),
        }
    }
}

fn canonical_hash(doc: &Table) -> String {
    let mut flat = Vec::new();
    flatten("", doc, &mut flat);
    flat.sort();
    let mut h = Sha256::new();
    for (k, v) in &flat {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A section being read; tracks which keys were consumed.
struct Section<'a> {
    path: String,
    table: Option<&'a Table>,
    allowed: &'static [&'static str],
}

impl<'a> Section<'a> {
    fn new(path: &str, table: Option<&'a Table>, allowed: &'static [&'static str]) -> Result<Self> {
        if let Some(t) = table {
            for k in t.keys() {
                if !allowed.contains(&k.as_str()) {
                    let full = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    return Err(Error::Config(format!("unknown key `{full}`{}", suggest(k, allowed))));
                }
            }
        }
        Ok(Self { path: path.to_string(), table, allowed })
    }

    fn full(&self, key: &str) -> String {
        debug_assert!(self.allowed.contains(&key), "{key} not declared");
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn sub(&self, key: &str, allowed: &'static [&'static str]) -> Result<Section<'a>> {
        let t = match self.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(Error::Config(format!("`{}` must be a section", self.full(key)))),
        };
        Section::new(&self.full(key), t, allowed)
    }

    fn missing(&self, key: &str) -> Error {
        Error::Config(format!("missing key `{}`", self.full(key)))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(Error::Config(format!("`{}` must be a number", self.full(key)))),
        }
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.opt_f64(key)?.ok_or_else(|| self.missing(key))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    fn opt_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(Error::Config(format!("`{}` must be a nonnegative integer", self.full(key)))),
        }
    }

    fn opt_str(&self, key: &str) -> Result<Option<&'a str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(Error::Config(format!("`{}` must be a string", self.full(key)))),
        }
    }

    fn choice(&self, key: &str, options: &[&str], default: Option<&'static str>) -> Result<String> {
        let s = match (self.opt_str(key)?, default) {
            (Some(s), _) => s,
            (None, Some(d)) => d,
            (None, None) => return Err(self.missing(key)),
        };
        if options.contains(&s) {
            Ok(s.to_string())
        } else {
            Err(Error::invalid(self.full(key), format!("`{s}` is not one of {options:?}{}", suggest(s, options))))
        }
    }

    fn vec_f64(&self, key: &str, len: usize) -> Result<Vec<f64>> {
        let arr = match self.get(key) {
            None => return Err(self.missing(key)),
            Some(Value::Array(a)) => a,
            Some(_) => return Err(Error::Config(format!("`{}` must be an array of numbers", self.full(key)))),
        };
        let v: Option<Vec<f64>> = arr
            .iter()
            .map(|x| match x {
                Value::Float(f) => Some(*f),
                Value::Integer(i) => Some(*i as f64),
                _ => None,
            })
            .collect();
        match v {
            Some(v) if v.len() == len => Ok(v),
            Some(v) => Err(Error::invalid(self.full(key), format!("expected {len} entries, got {}", v.len()))),
            None => Err(Error::Config(format!("`{}` must be an array of numbers", self.full(key)))),
        }
    }

    fn counts(&self, key: &str) -> Result<Vec<usize>> {
        let bad = || Error::Config(format!("`{}` must be a positive integer or an array of them", self.full(key)));
        match self.get(key) {
            None => Err(self.missing(key)),
            Some(Value::Integer(i)) if *i > 0 => Ok(vec![*i as usize]),
            Some(Value::Array(a)) if !a.is_empty() => a
                .iter()
                .map(|x| match x {
                    Value::Integer(i) if *i > 0 => Ok(*i as usize),
                    _ => Err(bad()),
                })
                .collect(),
            Some(_) => Err(bad()),
        }
    }
}

const TOP: &[&str] = &["seed", "replications", "fine_factor", "levy", "model", "design", "estimate", "mc"];
const LEVY: &[&str] = &["alpha", "tail_index_q", "nuisance"];
const NUISANCE: &[&str] =
    &["kind", "rate_plus", "rate_minus", "plus", "minus", "beta", "beta_doubleprime", "density_scale"];
const LAW: &[&str] = &["law", "at", "lo", "hi", "mean", "sd"];
const MODEL: &[&str] =
    &["drift", "kappa", "theta0", "theta_lo", "theta_hi", "weight_power", "dissipation_kappa", "sigma"];
const SIGMA: &[&str] = &["kind", "value", "base", "amplitude"];
const DESIGN: &[&str] = &["horizon", "n", "T", "h", "delta", "x0", "burn_in_time"];
const ESTIMATE: &[&str] =
    &["regressor", "rho", "alpha_lo", "alpha_hi", "window", "window_exponent", "scale_mode", "c_sigma"];
const MC: &[&str] = &["studentizer"];

fn jump_law(s: &Section<'_>) -> Result<JumpLaw> {
    let law = s.choice("law", &["point", "uniform", "normal"], None)?;
    Ok(match law.as_str() {
        "point" => JumpLaw::Point { at: s.f64("at")? },
        "uniform" => JumpLaw::Uniform { lo: s.f64("lo")?, hi: s.f64("hi")? },
        _ => JumpLaw::Normal { mean: s.f64_or("mean", 0.0)?, sd: s.f64("sd")? },
    })
}

fn levy(s: &Section<'_>) -> Result<LevyConfig> {
    let alpha = s.f64("alpha")?;
    let tail_index_q = match s.get("tail_index_q") {
        None => None,
        Some(Value::String(x)) if x == "none" => None,
        Some(_) => Some(s.f64("tail_index_q")?),
    };
    let n = s.sub("nuisance", NUISANCE)?;
    let kind = n.choice("kind", &["none", "compound-poisson", "tempered"], Some("none"))?;
    let nuisance = match kind.as_str() {
        "none" => NuisanceSpec::None,
        "compound-poisson" => {
            let plus = JumpSide { rate: n.f64_or("rate_plus", 0.0)?, law: jump_law(&n.sub("plus", LAW)?)? };
            let minus = JumpSide { rate: n.f64_or("rate_minus", 0.0)?, law: jump_law(&n.sub("minus", LAW)?)? };
            NuisanceSpec::CompoundPoissonSigned { plus, minus }
        }
        _ => NuisanceSpec::TemperedTail {
            beta: n.f64("beta")?,
            beta_doubleprime: n.f64("beta_doubleprime")?,
            density_scale: n.f64_or("density_scale", 1.0)?,
        },
    };
    let cfg = LevyConfig { alpha, nuisance, tail_index_q };
    cfg.validate().map_err(|e| match e {
        Error::Invalid { field, reason } if field == "alpha" => Error::Invalid { field: "levy.alpha".into(), reason },
        other => other,
    })?;
    Ok(cfg)
}

fn interpret(doc: &Table, hash: String) -> Result<RunConfig> {
    let top = Section::new("", Some(doc), TOP)?;
    let levy = levy(&top.sub("levy", LEVY)?)?;

    let d = top.sub("design", DESIGN)?;
    let horizon = d.choice("horizon", &["fixed", "ergodic"], None)?;
    let ns = d.counts("n")?;
    let delta = d.f64_or("delta", DEFAULT_DELTA)?;
    let x0 = d.f64_or("x0", 0.0)?;
    let burn_in_time = d.f64_or("burn_in_time", 10.0)?;
    let h_fixed = d.opt_f64("h")?;
    let ergodic = horizon == "ergodic";
    let t_horizon = if ergodic {
        if d.get("T").is_some() {
            return Err(Error::invalid("design.T", "only valid for horizon = \"fixed\""));
        }
        None
    } else {
        if h_fixed.is_some() {
            return Err(Error::invalid("design.h", "fixed horizons take h = T/n; set design.T instead"));
        }
        Some(d.f64("T")?)
    };
    let designs: Vec<SamplingDesign> = ns
        .iter()
        .map(|&n| {
            let mut s = match t_horizon {
                Some(t) => SamplingDesign::fixed_t(n, t),
                None => match h_fixed {
                    Some(h) => SamplingDesign::ergodic_with_h(n, h),
                    None => SamplingDesign::ergodic(n),
                },
            };
            s.delta = delta;
            s.x0 = x0;
            s.burn_in_time = burn_in_time;
            s
        })
        .collect();
    let mut warnings = Vec::new();
    for s in &designs {
        warnings.extend(s.validate()?);
    }

    let m = top.sub("model", MODEL)?;
    let drift = match m.choice("drift", &["linear", "bernoulli"], None)?.as_str() {
        "linear" => DriftFamily::Linear,
        _ => DriftFamily::Bernoulli { kappa: m.f64("kappa")? },
    };
    let dim = drift.dim();
    let theta0 = m.vec_f64("theta0", dim)?;
    let domain = ThetaDomain::new(m.vec_f64("theta_lo", dim)?, m.vec_f64("theta_hi", dim)?)?;
    let default_power = if ergodic && levy.tail_index_q.is_some() { 2.0 } else { 0.0 };
    let weight = WeightFn::poly_decay(m.f64_or("weight_power", default_power)?);
    let sg = m.sub("sigma", SIGMA)?;
    let sigma = match sg.choice("kind", &["constant", "sine"], Some("constant"))?.as_str() {
        "constant" => ScaleFn::Constant(sg.f64_or("value", 1.0)?),
        _ => ScaleFn::Sine { base: sg.f64("base")?, amplitude: sg.f64("amplitude")? },
    };
    let model = ModelSpec {
        drift,
        theta0,
        sigma,
        weight,
        domain,
        levy,
        dissipation_kappa: m.f64_or("dissipation_kappa", 1.0)?,
    };
    model.validate()?;
    if ergodic {
        warnings.extend(model.dissipation_warning());
    }

    let e = top.sub("estimate", ESTIMATE)?;
    let regressor = parse_regressor(&e.choice("regressor", REGRESSORS, Some("euler"))?, &model.drift)?;
    let defaults = PowerVariationConfig::default();
    let pv = PowerVariationConfig {
        rho: e.f64_or("rho", defaults.rho)?,
        alpha_bounds: (e.f64_or("alpha_lo", defaults.alpha_bounds.0)?, e.f64_or("alpha_hi", defaults.alpha_bounds.1)?),
        window: e.opt_u64("window")?.map(|w| w as usize),
        window_exponent: e.f64_or("window_exponent", defaults.window_exponent)?,
        c_sigma: e.opt_f64("c_sigma")?,
    };
    let scale_mode = match e.choice("scale_mode", &["spot", "constant"], Some("spot"))?.as_str() {
        "spot" => ScaleMode::SpotScale,
        _ => ScaleMode::ConstantScale,
    };

    let mc = top.sub("mc", MC)?;
    let studentizer = match mc.choice("studentizer", &["plugin", "oracle", "identity"], Some("plugin"))?.as_str() {
        "plugin" => Studentizer::Plugin,
        "oracle" => Studentizer::Oracle,
        _ => Studentizer::Identity,
    };

    let cfg = RunConfig {
        model,
        designs,
        regressor,
        pv,
        scale_mode,
        studentizer,
        replications: top.opt_u64("replications")?.unwrap_or(100) as usize,
        seed: top.opt_u64("seed")?.unwrap_or(0),
        fine_factor: top.opt_u64("fine_factor")?.unwrap_or(1) as usize,
        hash,
        warnings,
    };
    for s in &cfg.designs {
        cfg.pv.validate(&cfg.model.levy, s.horizon, s.h)?;
    }
    if cfg.fine_factor == 0 {
        return Err(Error::invalid("fine_factor", "must be at least 1"));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7
[levy]
alpha = 1.5
[model]
drift = "linear"
theta0 = [0.5, -1.0]
theta_lo = [-5.0, -5.0]
theta_hi = [5.0, 5.0]
[design]
horizon = "fixed"
n = 1000
T = 1.0
"#;

    #[test]
    fn minimal_config_parses() {
        let c = RunConfig::parse(BASE, &[]).unwrap();
        assert_eq!(c.designs.len(), 1);
        assert_eq!(c.designs[0].h, 1e-3);
        assert_eq!(c.regressor, RegressorKind::Euler);
        assert_eq!(c.model.weight, WeightFn::one());
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn unknown_key_suggests() {
        let err = RunConfig::parse(&BASE.replace("alpha = 1.5", "alpah = 1.5"), &[]).unwrap_err().to_string();
        assert!(err.contains("levy.alpah") && err.contains("alpha"), "{err}");
    }

    #[test]
    fn missing_key_named_by_path() {
        let err = RunConfig::parse(&BASE.replace("T = 1.0", ""), &[]).unwrap_err().to_string();
        assert!(err.contains("design.T"), "{err}");
    }

    #[test]
    fn overrides_apply_and_change_hash() {
        let a = RunConfig::parse(BASE, &[]).unwrap();
        let b = RunConfig::parse(BASE, &["replications=2".into(), "levy.alpha=1.2".into()]).unwrap();
        assert_eq!(b.replications, 2);
        assert_eq!(b.model.levy.alpha, 1.2);
        assert_ne!(a.hash, b.hash);
        let c = RunConfig::parse(BASE, &[]).unwrap();
        assert_eq!(a.hash, c.hash);
    }

    #[test]
    fn pairing_rejected() {
        let s = BASE.replace("drift = \"linear\"", "drift = \"bernoulli\"\nkappa = 0.5");
        let err = RunConfig::parse(&s, &["estimate.regressor=\"exact-linear\"".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
