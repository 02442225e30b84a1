//! Shared market domain: asset specifications, price paths, the
//! fundamental-value and buyer-probability functions, the average noise
//! quote, the cash endowment bound and the RD misvaluation measure.
//!
//! Currency amounts are plain `f64` dollars; the recursions are real-valued
//! and no cent quantization is applied.

use crate::error::EngineError;

// ---------------------------------------------------------------------------
// Asset and market specifications
// ---------------------------------------------------------------------------

/// Dividend distribution, terminal value and behavioural parameters of one
/// tradeable asset.
///
/// * `kappa` scales the uniform confusion component of quotes,
/// * `alpha` is the anchoring weight on the previous period price,
/// * `phi` is the weak-foresight slope of the buyer probability.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetSpec {
    dividend_support: Vec<f64>,
    terminal_value: f64,
    kappa: f64,
    alpha: f64,
    phi: f64,
    mean_dividend: f64,
}

impl AssetSpec {
    pub fn new(
        dividend_support: Vec<f64>,
        terminal_value: f64,
        kappa: f64,
        alpha: f64,
        phi: f64,
    ) -> Result<Self, EngineError> {
        if dividend_support.is_empty() {
            return Err(EngineError::InvalidParameter(
                "dividend_support must not be empty".into(),
            ));
        }
        if dividend_support.iter().any(|d| !d.is_finite()) {
            return Err(EngineError::InvalidParameter(
                "dividend_support values must be finite".into(),
            ));
        }
        if !terminal_value.is_finite() || terminal_value < 0.0 {
            return Err(EngineError::InvalidParameter(format!(
                "terminal_value must be a nonnegative currency amount, got {terminal_value}"
            )));
        }
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(EngineError::InvalidParameter(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
            return Err(EngineError::InvalidParameter(format!(
                "alpha must lie in the open interval (0,1), got {alpha}"
            )));
        }
        if !phi.is_finite() || phi < 0.0 {
            return Err(EngineError::InvalidParameter(format!(
                "phi must be nonnegative, got {phi}"
            )));
        }
        let mean_dividend = support_mean(&dividend_support);
        Ok(AssetSpec {
            dividend_support,
            terminal_value,
            kappa,
            alpha,
            phi,
            mean_dividend,
        })
    }

    /// The speculative asset of the reference two-asset market: positive
    /// mean dividend, declining fundamental value.
    pub fn reference_speculative(kappa: f64, alpha: f64, phi: f64) -> Result<Self, EngineError> {
        AssetSpec::new(vec![0.0, 0.1, 0.16, 0.22], 1.80, kappa, alpha, phi)
    }

    /// The value asset: symmetric dividend support with zero mean (negative
    /// dividends act as holding costs), so its fundamental value is constant.
    pub fn reference_value(kappa: f64, alpha: f64) -> Result<Self, EngineError> {
        AssetSpec::new(vec![-0.2, -0.1, 0.0, 0.1, 0.2], 2.80, kappa, alpha, 0.0)
    }

    pub fn dividend_support(&self) -> &[f64] {
        &self.dividend_support
    }

    pub fn terminal_value(&self) -> f64 {
        self.terminal_value
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Arithmetic mean of the dividend support, computed once at
    /// construction.
    pub fn mean_dividend(&self) -> f64 {
        self.mean_dividend
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self, EngineError> {
        AssetSpec::new(
            self.dividend_support.clone(),
            self.terminal_value,
            kappa,
            self.alpha,
            self.phi,
        )
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self, EngineError> {
        AssetSpec::new(
            self.dividend_support.clone(),
            self.terminal_value,
            self.kappa,
            alpha,
            self.phi,
        )
    }

    pub fn with_phi(&self, phi: f64) -> Result<Self, EngineError> {
        AssetSpec::new(
            self.dividend_support.clone(),
            self.terminal_value,
            self.kappa,
            self.alpha,
            phi,
        )
    }

    /// Horizon-coupled checks: the weak-foresight slope must keep the buyer
    /// probability strictly positive through period T (phi in [0, 0.5/T)),
    /// and the fundamental value must stay positive over the whole market.
    pub fn validate_for_horizon(&self, horizon: u32) -> Result<(), EngineError> {
        if horizon == 0 {
            return Err(EngineError::InvalidParameter(
                "market horizon must be at least one period".into(),
            ));
        }
        let bound = 0.5 / horizon as f64;
        if self.phi >= bound {
            return Err(EngineError::InvalidParameter(format!(
                "phi must lie in [0, 0.5/T); got phi = {} with T = {} (bound {})",
                self.phi, horizon, bound
            )));
        }
        // The smallest fundamental value over t = 1..=T sits at an endpoint.
        let fv_first = fv_unchecked(self, 1, horizon);
        let fv_last = fv_unchecked(self, horizon, horizon);
        if fv_first <= 0.0 || fv_last <= 0.0 {
            return Err(EngineError::InvalidParameter(format!(
                "fundamental value must stay positive over the horizon; FV_1 = {fv_first}, FV_T = {fv_last}"
            )));
        }
        Ok(())
    }
}

/// How the pre-market price anchor is initialized. The engine pins the
/// anchor to the fundamental value at t = 1 rather than zero, so the bubble
/// is not triggered artificially by an inexperienced-trader start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialPriceRule {
    #[default]
    FundamentalValue,
}

/// A one- or two-asset market over a fixed number of trading periods.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    periods: u32,
    assets: Vec<AssetSpec>,
    pub initial_price_rule: InitialPriceRule,
}

impl MarketSpec {
    pub fn single(asset: AssetSpec, periods: u32) -> Result<Self, EngineError> {
        Self::build(vec![asset], periods)
    }

    pub fn two_asset(asset1: AssetSpec, asset2: AssetSpec, periods: u32) -> Result<Self, EngineError> {
        Self::build(vec![asset1, asset2], periods)
    }

    fn build(assets: Vec<AssetSpec>, periods: u32) -> Result<Self, EngineError> {
        if periods == 0 {
            return Err(EngineError::InvalidParameter(
                "periods must be at least 1".into(),
            ));
        }
        for asset in &assets {
            asset.validate_for_horizon(periods)?;
        }
        Ok(MarketSpec {
            periods,
            assets,
            initial_price_rule: InitialPriceRule::FundamentalValue,
        })
    }

    pub fn periods(&self) -> u32 {
        self.periods
    }

    pub fn assets(&self) -> &[AssetSpec] {
        &self.assets
    }
}

/// Mean of the support, summing opposite-ranked values first so symmetric
/// supports (the zero-mean value asset) cancel exactly instead of leaving
/// rounding residue.
fn support_mean(support: &[f64]) -> f64 {
    let mut sorted = support.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let (mut lo, mut hi) = (0usize, sorted.len() - 1);
    while lo < hi {
        sum += sorted[lo] + sorted[hi];
        lo += 1;
        hi -= 1;
    }
    if lo == hi {
        sum += sorted[lo];
    }
    sum / support.len() as f64
}

// ---------------------------------------------------------------------------
// Events and price paths
// ---------------------------------------------------------------------------

/// Joint buy/sell configuration of fundamentalists and speculators.
///
/// E1: fundamentalists buy, speculators sell. E2: both buy.
/// E3: both sell. E4: fundamentalists sell, speculators buy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventLabel {
    E1,
    E2,
    E3,
    E4,
}

impl std::fmt::Display for EventLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EventLabel::E1 => "E1",
            EventLabel::E2 => "E2",
            EventLabel::E3 => "E3",
            EventLabel::E4 => "E4",
        };
        f.write_str(s)
    }
}

/// One trading period of a computed path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodRecord {
    /// 1-based period index.
    pub t: u32,
    pub fv: f64,
    /// Average (or equilibrium) price of the period.
    pub price: f64,
    pub bid: f64,
    pub ask: f64,
    /// Demand/supply imbalance B_t/A_t - 1.
    pub imbalance: f64,
    /// Per-period relative deviation (p_t - FV_t) / |mean FV|.
    pub rd: f64,
    pub event: Option<EventLabel>,
}

/// Per-period series of fundamental value, prices and misvaluation for one
/// asset over a full market session.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    records: Vec<PeriodRecord>,
    average_rd: f64,
}

impl PricePath {
    /// Builds a path from per-period records, filling the `rd` column from
    /// the price and fundamental-value columns.
    pub fn new(mut records: Vec<PeriodRecord>) -> Result<Self, EngineError> {
        let prices: Vec<f64> = records.iter().map(|r| r.price).collect();
        let fvs: Vec<f64> = records.iter().map(|r| r.fv).collect();
        let (per_period, average_rd) = rd_series(&prices, &fvs)?;
        for (record, rd) in records.iter_mut().zip(per_period) {
            record.rd = rd;
        }
        Ok(PricePath {
            records,
            average_rd,
        })
    }

    pub fn records(&self) -> &[PeriodRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.price).collect()
    }

    /// Time-averaged relative deviation over the whole path.
    pub fn average_rd(&self) -> f64 {
        self.average_rd
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Fundamental value FV_t = (T - t + 1) * mean_dividend + terminal_value.
pub fn fundamental_value(asset: &AssetSpec, t: u32, horizon: u32) -> Result<f64, EngineError> {
    if t == 0 || t > horizon {
        return Err(EngineError::PeriodOutOfRange { t, horizon });
    }
    Ok(fv_unchecked(asset, t, horizon))
}

/// Same formula without the range check; `t = horizon + 1` yields the
/// terminal value (zero remaining dividends), which the speculator belief
/// recursion needs at the final period.
pub(crate) fn fv_unchecked(asset: &AssetSpec, t: u32, horizon: u32) -> f64 {
    let remaining = horizon as f64 - t as f64 + 1.0;
    remaining * asset.mean_dividend() + asset.terminal_value
}

/// Probability of being a buyer in period t under weak foresight:
/// max(0.5 - phi * t, 0). `t = 0` is the pre-market boundary.
pub fn buyer_probability(phi: f64, t: u32) -> f64 {
    (0.5 - phi * t as f64).max(0.0)
}

/// Average quote posted by a noise trader:
/// (1 - alpha) * kappa * FV_t / 2 + alpha * prev_price.
pub fn noise_quote_mean(asset: &AssetSpec, fv_t: f64, prev_price: f64) -> f64 {
    (1.0 - asset.alpha) * asset.kappa * fv_t / 2.0 + asset.alpha * prev_price
}

/// Cash endowment sufficient for one bid per period over the whole market
/// without going bankrupt: kappa * FV_1 * T. Quotes stay below kappa * FV_1
/// by induction (requires kappa > 1), so this bound covers the worst case of
/// every bid filling.
pub fn endowment_bound(asset: &AssetSpec, horizon: u32) -> f64 {
    asset.kappa * fv_unchecked(asset, 1, horizon) * horizon as f64
}

/// Relative-deviation series and its time average:
/// RD_t = (p_t - FV_t) / |mean FV|, RD = mean of RD_t.
pub fn rd_measure(path: &PricePath) -> Result<(Vec<f64>, f64), EngineError> {
    let prices: Vec<f64> = path.records.iter().map(|r| r.price).collect();
    let fvs: Vec<f64> = path.records.iter().map(|r| r.fv).collect();
    rd_series(&prices, &fvs)
}

pub(crate) fn rd_series(prices: &[f64], fvs: &[f64]) -> Result<(Vec<f64>, f64), EngineError> {
    assert_eq!(prices.len(), fvs.len());
    if prices.is_empty() {
        return Err(EngineError::InvalidParameter(
            "relative deviation requires at least one period".into(),
        ));
    }
    let mean_fv = fvs.iter().sum::<f64>() / fvs.len() as f64;
    if mean_fv == 0.0 {
        return Err(EngineError::ZeroMeanFundamental);
    }
    let denom = mean_fv.abs();
    let per_period: Vec<f64> = prices
        .iter()
        .zip(fvs)
        .map(|(p, fv)| (p - fv) / denom)
        .collect();
    let average = per_period.iter().sum::<f64>() / per_period.len() as f64;
    Ok((per_period, average))
}
