//! Sectioned key-value experiment configs.
//!
//! The format is a flat INI-style text file chosen for hand-editing and
//! diffing in laboratory settings:
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! list = 1, 2, 3
//! ```
//!
//! Sections: `market`, `asset.1`, `asset.2`, `population`, `strategy`,
//! `sweep`, `output`. `validate` collects every violated invariant instead
//! of stopping at the first.

use std::collections::BTreeMap;
use std::fmt;

use bubblelab::factor::FactorPopulation;
use bubblelab::hetero::{Asset2Mode, HeteroPopulation, StrategyParams};
use bubblelab::market::{AssetSpec, MarketSpec};
use bubblelab::mc::Population;

// ---------------------------------------------------------------------------
// Raw parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

/// Parsed but untyped config: section -> key -> (value, line).
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut config = RawConfig::default();
        let mut current: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(ParseError {
                        line: line_no,
                        column: raw_line.len(),
                        message: "unterminated section header (missing `]`)".into(),
                    });
                };
                let name = name.trim();
                if name.is_empty() {
                    return Err(ParseError {
                        line: line_no,
                        column: 2,
                        message: "empty section name".into(),
                    });
                }
                if config.sections.contains_key(name) {
                    return Err(ParseError {
                        line: line_no,
                        column: 1,
                        message: format!("duplicate section `[{name}]`"),
                    });
                }
                config.sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(ParseError {
                    line: line_no,
                    column: 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            if key.is_empty() {
                return Err(ParseError {
                    line: line_no,
                    column: 1,
                    message: "empty key".into(),
                });
            }
            let Some(section) = &current else {
                return Err(ParseError {
                    line: line_no,
                    column: 1,
                    message: format!("key `{key}` appears before any [section] header"),
                });
            };
            let entries = config.sections.get_mut(section).unwrap();
            if entries.contains_key(key) {
                return Err(ParseError {
                    line: line_no,
                    column: 1,
                    message: format!("duplicate key `{key}` in section `[{section}]`"),
                });
            }
            entries.insert(key.to_string(), (value.to_string(), line_no));
        }
        Ok(config)
    }

    /// Applies a `section.key=value` override (the key is everything after
    /// the last dot, so `asset.1.kappa=5` targets `[asset.1]`).
    pub fn apply_override(&mut self, spec: &str) -> Result<(), String> {
        let Some((path, value)) = spec.split_once('=') else {
            return Err(format!("override `{spec}` is not of the form section.key=value"));
        };
        let path = path.trim();
        let Some((section, key)) = path.rsplit_once('.') else {
            return Err(format!("override key `{path}` must name a section and a key"));
        };
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.trim().to_string(), (value.trim().to_string(), 0));
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|(v, _)| v.as_str())
    }

    fn section(&self, name: &str) -> Option<&BTreeMap<String, (String, usize)>> {
        self.sections.get(name)
    }
}

// ---------------------------------------------------------------------------
// Typed experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Homogeneous,
    FactorTwoAsset,
    HeteroSingle,
    HeteroTwoAsset,
    MonteCarlo,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Homogeneous => "homogeneous",
            Model::FactorTwoAsset => "factor_two_asset",
            Model::HeteroSingle => "hetero_single",
            Model::HeteroTwoAsset => "hetero_two_asset",
            Model::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Kappa,
    Alpha,
    Phi,
    Pi1,
    JMarketNeutral,
    JNoise,
    Kappa2,
    Gamma22,
}

impl SweepAxis {
    pub fn key(&self) -> &'static str {
        match self {
            SweepAxis::Kappa => "kappa",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Phi => "phi",
            SweepAxis::Pi1 => "pi1",
            SweepAxis::JMarketNeutral => "j_mn",
            SweepAxis::JNoise => "j_n",
            SweepAxis::Kappa2 => "kappa2",
            SweepAxis::Gamma22 => "gamma2_2",
        }
    }

    fn from_key(key: &str) -> Option<Self> {
        Some(match key {
            "kappa" => SweepAxis::Kappa,
            "alpha" => SweepAxis::Alpha,
            "phi" => SweepAxis::Phi,
            "pi1" => SweepAxis::Pi1,
            "j_mn" => SweepAxis::JMarketNeutral,
            "j_n" => SweepAxis::JNoise,
            "kappa2" => SweepAxis::Kappa2,
            "gamma2_2" => SweepAxis::Gamma22,
            _ => return None,
        })
    }

    fn allowed_for(model: Model) -> &'static [SweepAxis] {
        match model {
            Model::Homogeneous => &[SweepAxis::Kappa, SweepAxis::Alpha, SweepAxis::Phi],
            Model::FactorTwoAsset => &[SweepAxis::Pi1, SweepAxis::JMarketNeutral],
            Model::HeteroTwoAsset => &[SweepAxis::JNoise, SweepAxis::Kappa2, SweepAxis::Gamma22],
            Model::HeteroSingle | Model::MonteCarlo => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Tsv,
}

impl OutputFormat {
    pub fn delimiter(&self) -> char {
        match self {
            OutputFormat::Csv => ',',
            OutputFormat::Tsv => '\t',
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub path: std::path::PathBuf,
    pub format: OutputFormat,
}

/// Fully validated experiment, ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: Model,
    pub market: MarketSpec,
    pub population: Option<Population>,
    pub strategy: Option<StrategyParams>,
    pub strategy2: Option<StrategyParams>,
    pub asset2_mode: Option<Asset2Mode>,
    /// Sweep axes in declaration order with their value lists.
    pub sweep: Vec<(SweepAxis, Vec<f64>)>,
    pub output: OutputSpec,
    pub sessions: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

const KNOWN_SECTIONS: &[&str] = &[
    "market",
    "asset.1",
    "asset.2",
    "population",
    "strategy",
    "sweep",
    "output",
];

const MARKET_KEYS: &[&str] = &["model", "periods", "sessions", "seed"];
const ASSET_KEYS: &[&str] = &["dividend_support", "terminal_value", "kappa", "alpha", "phi"];
const POPULATION_KEYS: &[&str] = &[
    "noise",
    "directional",
    "market_neutral",
    "fundamentalist",
    "speculator",
    "total",
    "noise_pct",
    "directional_pct",
    "market_neutral_pct",
    "fundamentalist_pct",
    "speculator_pct",
];
const STRATEGY_KEYS: &[&str] = &[
    "alpha_f",
    "gamma1",
    "gamma2",
    "alpha_f_2",
    "gamma1_2",
    "gamma2_2",
    "asset2_mode",
];
const OUTPUT_KEYS: &[&str] = &["path", "format"];

struct Checker<'a> {
    raw: &'a RawConfig,
    violations: Vec<Violation>,
}

impl<'a> Checker<'a> {
    fn flag(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            key: key.into(),
            message: message.into(),
        });
    }

    fn f64(&mut self, section: &str, key: &str) -> Option<f64> {
        let text = self.raw.get(section, key)?;
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.flag(format!("{section}.{key}"), format!("`{text}` is not a finite number"));
                None
            }
        }
    }

    fn u32(&mut self, section: &str, key: &str) -> Option<u32> {
        let text = self.raw.get(section, key)?;
        match text.parse::<u32>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.flag(
                    format!("{section}.{key}"),
                    format!("`{text}` is not a nonnegative integer"),
                );
                None
            }
        }
    }

    fn u64(&mut self, section: &str, key: &str) -> Option<u64> {
        let text = self.raw.get(section, key)?;
        match text.parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.flag(
                    format!("{section}.{key}"),
                    format!("`{text}` is not a nonnegative integer"),
                );
                None
            }
        }
    }

    fn f64_list(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let text = self.raw.get(section, key)?;
        let mut values = Vec::new();
        for part in text.split(',') {
            let part = part.trim();
            match part.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    self.flag(
                        format!("{section}.{key}"),
                        format!("list element `{part}` is not a finite number"),
                    );
                    return None;
                }
            }
        }
        if values.is_empty() {
            self.flag(format!("{section}.{key}"), "list must not be empty");
            return None;
        }
        Some(values)
    }

    fn require(&mut self, section: &str, key: &str) -> bool {
        if self.raw.get(section, key).is_none() {
            self.flag(format!("{section}.{key}"), "required key is missing");
            false
        } else {
            true
        }
    }

    fn check_known_keys(&mut self, section: &str, allowed: &[&str]) {
        if let Some(entries) = self.raw.section(section) {
            for (key, (_, line)) in entries {
                if !allowed.contains(&key.as_str()) {
                    self.flag(
                        format!("{section}.{key}"),
                        format!("unknown key (line {line})"),
                    );
                }
            }
        }
    }
}

/// Validates the raw config and builds the typed experiment. Returns every
/// violation when the config is not runnable.
pub fn load(raw: &RawConfig) -> Result<Experiment, Vec<Violation>> {
    let mut c = Checker {
        raw,
        violations: Vec::new(),
    };

    for name in raw.sections.keys() {
        if !KNOWN_SECTIONS.contains(&name.as_str()) {
            c.flag(name.clone(), "unknown section");
        }
    }
    c.check_known_keys("market", MARKET_KEYS);
    c.check_known_keys("asset.1", ASSET_KEYS);
    c.check_known_keys("asset.2", ASSET_KEYS);
    c.check_known_keys("population", POPULATION_KEYS);
    c.check_known_keys("strategy", STRATEGY_KEYS);
    c.check_known_keys("output", OUTPUT_KEYS);

    // --- market ---
    let model = match raw.get("market", "model") {
        None => {
            c.flag("market.model", "required key is missing");
            None
        }
        Some("homogeneous") => Some(Model::Homogeneous),
        Some("factor_two_asset") => Some(Model::FactorTwoAsset),
        Some("hetero_single") => Some(Model::HeteroSingle),
        Some("hetero_two_asset") => Some(Model::HeteroTwoAsset),
        Some("monte_carlo") => Some(Model::MonteCarlo),
        Some(other) => {
            c.flag(
                "market.model",
                format!(
                    "unknown model `{other}`; expected homogeneous, factor_two_asset, \
                     hetero_single, hetero_two_asset or monte_carlo"
                ),
            );
            None
        }
    };
    let periods = if c.require("market", "periods") {
        c.u32("market", "periods")
    } else {
        None
    };
    if let Some(0) = periods {
        c.flag("market.periods", "periods must be at least 1");
    }
    let horizon = periods.filter(|&p| p >= 1);

    let sessions = c.u32("market", "sessions").unwrap_or(1000);
    let seed = c.u64("market", "seed").unwrap_or(0);
    if model.is_some() && model != Some(Model::MonteCarlo) {
        for key in ["sessions", "seed"] {
            if raw.get("market", key).is_some() {
                c.flag(
                    format!("market.{key}"),
                    "only the monte_carlo model uses this key",
                );
            }
        }
    }

    // --- assets ---
    let asset1 = parse_asset(&mut c, "asset.1", horizon, true);
    let needs_asset2 = matches!(
        model,
        Some(Model::FactorTwoAsset) | Some(Model::HeteroTwoAsset)
    ) || (model == Some(Model::MonteCarlo) && raw.section("asset.2").is_some());
    let asset2 = parse_asset(&mut c, "asset.2", horizon, needs_asset2);
    if let Some(model) = model.filter(|_| !needs_asset2 && raw.section("asset.2").is_some()) {
        c.flag(
            "asset.2",
            format!("model {} does not use a second asset", model.name()),
        );
    }

    // --- population ---
    let population = parse_population(&mut c, model);

    // --- strategy ---
    let (strategy, strategy2, asset2_mode) = parse_strategy(&mut c, model, asset2.as_ref());

    // --- sweep ---
    let sweep = parse_sweep(&mut c, model, asset2_mode);

    // --- output ---
    let output = parse_output(&mut c);

    // Cross checks that need several sections at once.
    if let (Some(Model::FactorTwoAsset) | Some(Model::HeteroTwoAsset), Some(a2)) =
        (model, asset2.as_ref())
    {
        if a2.phi() != 0.0 {
            c.flag(
                "asset.2.phi",
                "noise traders buy asset 2 with probability 1/2; asset.2 requires phi = 0",
            );
        }
    }
    if model == Some(Model::MonteCarlo) {
        if sessions == 0 {
            c.flag("market.sessions", "sessions must be at least 1");
        }
        match &population {
            Some(Population::Hetero(pop)) => {
                if pop.j_fund + pop.j_spec > 0 {
                    if strategy.is_none() && raw.section("strategy").is_none() {
                        c.flag(
                            "strategy",
                            "fundamentalist/speculator populations require a [strategy] section",
                        );
                    }
                    if raw.section("asset.2").is_some() {
                        c.flag(
                            "asset.2",
                            "fundamentalist/speculator sessions trade a single asset",
                        );
                    }
                }
            }
            Some(Population::Factor(_)) | None => {}
        }
    }

    if !c.violations.is_empty() {
        return Err(c.violations);
    }

    // Everything individually validated; assemble the market spec.
    let horizon = horizon.expect("validated");
    let asset1 = asset1.expect("validated");
    let market = match &asset2 {
        Some(a2) if needs_asset2 => MarketSpec::two_asset(asset1, a2.clone(), horizon),
        _ => MarketSpec::single(asset1, horizon),
    };
    let market = match market {
        Ok(m) => m,
        Err(e) => {
            return Err(vec![Violation {
                key: "market".into(),
                message: e.to_string(),
            }])
        }
    };

    Ok(Experiment {
        model: model.expect("validated"),
        market,
        population,
        strategy,
        strategy2,
        asset2_mode,
        sweep,
        output: output.expect("validated"),
        sessions,
        seed,
    })
}

fn parse_asset(
    c: &mut Checker,
    section: &str,
    horizon: Option<u32>,
    required: bool,
) -> Option<AssetSpec> {
    if c.raw.section(section).is_none() {
        if required {
            c.flag(section.to_string(), "required section is missing");
        }
        return None;
    }
    let mut ok = true;
    for key in ["dividend_support", "terminal_value", "kappa", "alpha", "phi"] {
        ok &= c.require(section, key);
    }
    if !ok {
        return None;
    }
    let support = c.f64_list(section, "dividend_support")?;
    let tv = c.f64(section, "terminal_value")?;
    let kappa = c.f64(section, "kappa")?;
    let alpha = c.f64(section, "alpha")?;
    let phi = c.f64(section, "phi")?;

    // Check each field constraint independently so one bad parameter does
    // not hide another.
    let mut field_ok = true;
    if kappa <= 0.0 {
        c.flag(format!("{section}.kappa"), format!("kappa must be positive, got {kappa}"));
        field_ok = false;
    }
    if alpha <= 0.0 || alpha >= 1.0 {
        c.flag(
            format!("{section}.alpha"),
            format!("alpha must lie in the open interval (0,1), got {alpha}"),
        );
        field_ok = false;
    }
    if phi < 0.0 {
        c.flag(format!("{section}.phi"), format!("phi must be nonnegative, got {phi}"));
        field_ok = false;
    }
    if tv < 0.0 {
        c.flag(
            format!("{section}.terminal_value"),
            format!("terminal_value must be a nonnegative currency amount, got {tv}"),
        );
        field_ok = false;
    }
    if let Some(t) = horizon {
        let bound = 0.5 / t as f64;
        if phi >= bound {
            c.flag(
                format!("{section}.phi"),
                format!("phi must lie in [0, 0.5/T); got phi = {phi} with T = {t} (bound {bound})"),
            );
            field_ok = false;
        }
    }
    if !field_ok {
        return None;
    }

    match AssetSpec::new(support, tv, kappa, alpha, phi) {
        Ok(asset) => {
            if let Some(t) = horizon {
                if let Err(e) = asset.validate_for_horizon(t) {
                    c.flag(section.to_string(), e.to_string());
                    return None;
                }
            }
            Some(asset)
        }
        Err(e) => {
            c.flag(section.to_string(), e.to_string());
            None
        }
    }
}

fn count_from(
    c: &mut Checker,
    kind: &str,
    total: Option<u32>,
) -> Option<u32> {
    let count_key = kind.to_string();
    let pct_key = format!("{kind}_pct");
    let has_count = c.raw.get("population", &count_key).is_some();
    let has_pct = c.raw.get("population", &pct_key).is_some();
    if has_count && has_pct {
        c.flag(
            format!("population.{kind}"),
            format!("give either `{count_key}` or `{pct_key}`, not both"),
        );
        return None;
    }
    if has_count {
        return c.u32("population", &count_key);
    }
    if has_pct {
        let pct = c.f64("population", &pct_key)?;
        let Some(total) = total else {
            c.flag(
                format!("population.{pct_key}"),
                "percent populations require `total`",
            );
            return None;
        };
        let exact = pct * total as f64 / 100.0;
        let rounded = exact.round();
        if (exact - rounded).abs() > 1e-9 || rounded < 0.0 {
            c.flag(
                format!("population.{pct_key}"),
                format!("{pct}% of {total} traders is not a whole count"),
            );
            return None;
        }
        return Some(rounded as u32);
    }
    Some(0)
}

fn parse_population(c: &mut Checker, model: Option<Model>) -> Option<Population> {
    let present = c.raw.section("population").is_some();
    let needed = matches!(
        model,
        Some(Model::FactorTwoAsset) | Some(Model::HeteroSingle) | Some(Model::HeteroTwoAsset)
            | Some(Model::MonteCarlo)
    );
    match model {
        Some(Model::Homogeneous) if present => {
            c.flag(
                "population",
                "the homogeneous model admits no trader count (its price dynamics are N-invariant)",
            );
            return None;
        }
        _ => {}
    }
    if !present {
        if needed {
            c.flag("population", "required section is missing");
        }
        return None;
    }

    let total_key = c.u32("population", "total");
    let noise = count_from(c, "noise", total_key)?;
    let directional = count_from(c, "directional", total_key)?;
    let market_neutral = count_from(c, "market_neutral", total_key)?;
    let fundamentalist = count_from(c, "fundamentalist", total_key)?;
    let speculator = count_from(c, "speculator", total_key)?;

    let factor_kind = directional > 0
        || market_neutral > 0
        || c.raw.get("population", "directional").is_some()
        || c.raw.get("population", "market_neutral").is_some()
        || c.raw.get("population", "directional_pct").is_some()
        || c.raw.get("population", "market_neutral_pct").is_some();
    let hetero_kind = fundamentalist > 0
        || speculator > 0
        || c.raw.get("population", "fundamentalist").is_some()
        || c.raw.get("population", "speculator").is_some()
        || c.raw.get("population", "fundamentalist_pct").is_some()
        || c.raw.get("population", "speculator_pct").is_some();

    if factor_kind && hetero_kind {
        c.flag(
            "population",
            "mixes factor traders (directional/market_neutral) with investment traders \
             (fundamentalist/speculator); pick one population kind",
        );
        return None;
    }

    let expects_hetero = matches!(
        model,
        Some(Model::HeteroSingle) | Some(Model::HeteroTwoAsset)
    );
    if expects_hetero && factor_kind {
        c.flag(
            "population",
            "this model expects noise/fundamentalist/speculator counts",
        );
        return None;
    }
    if model == Some(Model::FactorTwoAsset) && hetero_kind {
        c.flag(
            "population",
            "this model expects noise/directional/market_neutral counts",
        );
        return None;
    }

    let population = if hetero_kind || expects_hetero {
        match HeteroPopulation::new(noise, fundamentalist, speculator) {
            Ok(p) => Population::Hetero(p),
            Err(e) => {
                c.flag("population", e.to_string());
                return None;
            }
        }
    } else {
        match FactorPopulation::new(noise, directional, market_neutral) {
            Ok(p) => Population::Factor(p),
            Err(e) => {
                c.flag("population", e.to_string());
                return None;
            }
        }
    };

    if let Some(total) = total_key {
        if population.total() != total {
            c.flag(
                "population.total",
                format!(
                    "counts sum to {} but `total` says {total}",
                    population.total()
                ),
            );
            return None;
        }
    }
    Some(population)
}

fn parse_strategy(
    c: &mut Checker,
    model: Option<Model>,
    asset2: Option<&AssetSpec>,
) -> (Option<StrategyParams>, Option<StrategyParams>, Option<Asset2Mode>) {
    let present = c.raw.section("strategy").is_some();
    let needed = matches!(
        model,
        Some(Model::HeteroSingle) | Some(Model::HeteroTwoAsset)
    );
    if matches!(model, Some(Model::Homogeneous) | Some(Model::FactorTwoAsset)) && present {
        c.flag(
            "strategy",
            format!("model {} has no strategy parameters", model.unwrap().name()),
        );
        return (None, None, None);
    }
    if !present {
        if needed {
            c.flag("strategy", "required section is missing");
        }
        return (None, None, None);
    }

    let mut ok = true;
    for key in ["alpha_f", "gamma1", "gamma2"] {
        ok &= c.require("strategy", key);
    }
    if !ok {
        return (None, None, None);
    }
    let alpha_f = c.f64("strategy", "alpha_f");
    let gamma1 = c.f64("strategy", "gamma1");
    let gamma2 = c.f64("strategy", "gamma2");
    let (Some(alpha_f), Some(gamma1), Some(gamma2)) = (alpha_f, gamma1, gamma2) else {
        return (None, None, None);
    };
    let strategy = match StrategyParams::new(alpha_f, gamma1, gamma2) {
        Ok(s) => Some(s),
        Err(e) => {
            c.flag("strategy", e.to_string());
            None
        }
    };

    // Asset-2 parameters default to the asset-1 values.
    let alpha_f_2 = c.f64("strategy", "alpha_f_2").unwrap_or(alpha_f);
    let gamma1_2 = c.f64("strategy", "gamma1_2").unwrap_or(gamma1);
    let gamma2_2 = c.f64("strategy", "gamma2_2").unwrap_or(gamma2);
    let strategy2 = match StrategyParams::new(alpha_f_2, gamma1_2, gamma2_2) {
        Ok(s) => Some(s),
        Err(e) => {
            c.flag("strategy", format!("asset-2 parameters: {e}"));
            None
        }
    };

    let asset2_mode = match c.raw.get("strategy", "asset2_mode") {
        None => None,
        Some("factor_directional") => Some(Asset2Mode::FactorDirectional),
        Some("factor_market_neutral") => Some(Asset2Mode::FactorMarketNeutral),
        Some("same_strategy") => Some(Asset2Mode::SameStrategy),
        Some(other) => {
            c.flag(
                "strategy.asset2_mode",
                format!(
                    "unknown mode `{other}`; expected factor_directional, \
                     factor_market_neutral or same_strategy"
                ),
            );
            None
        }
    };

    if model == Some(Model::HeteroTwoAsset) {
        if asset2_mode.is_none() && c.raw.get("strategy", "asset2_mode").is_none() {
            c.flag("strategy.asset2_mode", "required key is missing");
        }
        // Mirror the engine's limit-case preconditions so that a config
        // which validates cannot fail these checks at run time.
        if alpha_f != 1.0 || gamma1 != 0.0 {
            c.flag(
                "strategy",
                "the two-asset model requires the limit case alpha_f = 1, gamma1 = 0 \
                 (expectations ignore the previous trading price)",
            );
        }
        if asset2_mode == Some(Asset2Mode::SameStrategy) {
            if alpha_f_2 != 1.0 || gamma1_2 != 0.0 {
                c.flag(
                    "strategy",
                    "same_strategy requires alpha_f_2 = 1 and gamma1_2 = 0",
                );
            }
            if let Some(a2) = asset2 {
                if a2.mean_dividend() != 0.0 {
                    c.flag(
                        "asset.2.dividend_support",
                        "same_strategy requires a zero mean dividend on asset 2",
                    );
                }
            }
        }
    } else if model.is_some() && c.raw.get("strategy", "asset2_mode").is_some() {
        c.flag(
            "strategy.asset2_mode",
            "only the hetero_two_asset model uses an asset-2 strategy mode",
        );
    }

    (strategy, strategy2, asset2_mode)
}

fn parse_sweep(
    c: &mut Checker,
    model: Option<Model>,
    asset2_mode: Option<Asset2Mode>,
) -> Vec<(SweepAxis, Vec<f64>)> {
    let Some(entries) = c.raw.section("sweep") else {
        return Vec::new();
    };
    let Some(model) = model else {
        return Vec::new();
    };
    let allowed = SweepAxis::allowed_for(model);
    // Preserve declaration order by line number.
    let mut keyed: Vec<(&String, usize)> = entries.iter().map(|(k, (_, l))| (k, *l)).collect();
    keyed.sort_by_key(|(_, line)| *line);

    let mut axes = Vec::new();
    for (key, _) in keyed {
        let Some(axis) = SweepAxis::from_key(key) else {
            c.flag(
                format!("sweep.{key}"),
                "does not name a sweepable parameter",
            );
            continue;
        };
        if !allowed.contains(&axis) {
            c.flag(
                format!("sweep.{key}"),
                format!("axis is not sweepable for model {}", model.name()),
            );
            continue;
        }
        let Some(values) = c.f64_list("sweep", key) else {
            continue;
        };
        if matches!(axis, SweepAxis::JMarketNeutral | SweepAxis::JNoise)
            && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0)
        {
            c.flag(
                format!("sweep.{key}"),
                "trader counts must be nonnegative integers",
            );
            continue;
        }
        if axis == SweepAxis::Gamma22 && asset2_mode != Some(Asset2Mode::SameStrategy) {
            c.flag(
                "sweep.gamma2_2",
                "sweeping gamma2_2 requires asset2_mode = same_strategy",
            );
            continue;
        }
        axes.push((axis, values));
    }
    axes
}

fn parse_output(c: &mut Checker) -> Option<OutputSpec> {
    if c.raw.section("output").is_none() {
        c.flag("output", "required section is missing");
        return None;
    }
    if !c.require("output", "path") {
        return None;
    }
    let path = std::path::PathBuf::from(c.raw.get("output", "path").unwrap());
    let format = match c.raw.get("output", "format") {
        None | Some("csv") => OutputFormat::Csv,
        Some("tsv") => OutputFormat::Tsv,
        Some(other) => {
            c.flag("output.format", format!("unknown format `{other}`; expected csv or tsv"));
            return None;
        }
    };
    Some(OutputSpec { path, format })
}
