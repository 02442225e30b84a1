//! Fundamentalist/speculator model with noise-trader liquidity.
//!
//! Fundamentalists anchor on l_t = alpha_f l_{t-1} + (1 - alpha_f) p_{t-1}
//! minus the mean dividend and buy when l_t <= FV_t; speculators form
//! E_{p_t} = gamma1 p_{t-1} + gamma2 FV_t and buy when the one-period-ahead
//! expectation rises. Each period realizes one of four events (both groups
//! buying, both selling, or split), and every event has a closed-form
//! demand/supply imbalance and prevailing bid/ask. Noise traders buy with
//! probability 1/2 and quote around the previous period mid-price.

use rayon::prelude::*;

use crate::error::EngineError;
use crate::market::{
    fv_unchecked, noise_quote_mean, AssetSpec, EventLabel, PeriodRecord, PricePath,
};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Fundamentalist anchoring weight and speculator expectation weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyParams {
    /// Fundamentalist anchoring weight, in (0, 1].
    pub alpha_f: f64,
    /// Speculator weight on the lagged price, in [0, 1].
    pub gamma1: f64,
    /// Speculator weight on the fundamental value, nonnegative.
    pub gamma2: f64,
}

impl StrategyParams {
    pub fn new(alpha_f: f64, gamma1: f64, gamma2: f64) -> Result<Self, EngineError> {
        if !alpha_f.is_finite() || alpha_f <= 0.0 || alpha_f > 1.0 {
            return Err(EngineError::InvalidParameter(format!(
                "alpha_f must lie in (0, 1], got {alpha_f}"
            )));
        }
        if !(0.0..=1.0).contains(&gamma1) {
            return Err(EngineError::InvalidParameter(format!(
                "gamma1 must lie in [0, 1], got {gamma1}"
            )));
        }
        if !gamma2.is_finite() || gamma2 < 0.0 {
            return Err(EngineError::InvalidParameter(format!(
                "gamma2 must be nonnegative, got {gamma2}"
            )));
        }
        Ok(StrategyParams {
            alpha_f,
            gamma1,
            gamma2,
        })
    }

    pub fn with_gamma2(&self, gamma2: f64) -> Result<Self, EngineError> {
        StrategyParams::new(self.alpha_f, self.gamma1, gamma2)
    }
}

/// Trader counts: noise, fundamentalist, speculator.
///
/// Noise traders act as liquidity providers for the other two groups; the
/// usual regime keeps j_noise >= j_fund + j_spec, though only a nonempty
/// population is enforced (events that empty one side of the book are
/// reported as degenerate when they realize).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeteroPopulation {
    pub j_noise: u32,
    pub j_fund: u32,
    pub j_spec: u32,
}

impl HeteroPopulation {
    pub fn new(j_noise: u32, j_fund: u32, j_spec: u32) -> Result<Self, EngineError> {
        let pop = HeteroPopulation {
            j_noise,
            j_fund,
            j_spec,
        };
        if pop.total() == 0 {
            return Err(EngineError::DegenerateMarket(
                "population is empty; prevailing prices are undefined".into(),
            ));
        }
        Ok(pop)
    }

    pub fn total(&self) -> u32 {
        self.j_noise + self.j_fund + self.j_spec
    }
}

/// Beliefs carried across periods: the fundamentalist anchor l_t and the
/// speculator price expectations for the current and next period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefState {
    /// Fundamentalist anchor l_t.
    pub anchor: f64,
    /// Speculator expectation E_{p_t}.
    pub expected_price: f64,
    /// One-period-ahead expectation E_{p_{t+1}}.
    pub expected_price_next: f64,
}

impl BeliefState {
    /// Pre-market state: l_0 = FV_1 + mean_dividend. The expectation fields
    /// are placeholders; only the anchor feeds the first update.
    pub fn initial(fv_1: f64, mean_dividend: f64) -> Self {
        BeliefState {
            anchor: fv_1 + mean_dividend,
            expected_price: fv_1,
            expected_price_next: fv_1,
        }
    }
}

/// One period of the heterogeneous path with its event bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeteroPeriodRecord {
    pub t: u32,
    pub event: EventLabel,
    pub imbalance: f64,
    pub cumulative_imbalance: f64,
    pub bid: f64,
    pub ask: f64,
    pub mid: f64,
    pub q_noise: f64,
    pub q_fund: f64,
    pub q_spec: f64,
}

/// Price path plus the per-period event records behind it.
#[derive(Debug, Clone)]
pub struct HeteroResult {
    pub path: PricePath,
    pub records: Vec<HeteroPeriodRecord>,
}

/// Prevailing bid/ask and their midpoint for one event realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventQuotes {
    pub bid: f64,
    pub ask: f64,
    pub mid: f64,
}

// ---------------------------------------------------------------------------
// Belief recursion and event classification
// ---------------------------------------------------------------------------

/// Advances the belief state one period.
///
/// E_{p_{t+1}} substitutes E_{p_t} for the unobserved p_t, the only
/// self-consistent forward iteration available at the start of period t.
pub fn update_beliefs(
    prev: &BeliefState,
    prev_price: f64,
    fv_t: f64,
    fv_next: f64,
    params: &StrategyParams,
    mean_dividend: f64,
) -> BeliefState {
    let anchor = params.alpha_f * prev.anchor + (1.0 - params.alpha_f) * prev_price - mean_dividend;
    let expected_price = params.gamma1 * prev_price + params.gamma2 * fv_t;
    let expected_price_next = params.gamma1 * expected_price + params.gamma2 * fv_next;
    BeliefState {
        anchor,
        expected_price,
        expected_price_next,
    }
}

/// Maps beliefs to the realized event. Fundamentalists buy on l_t <= FV_t;
/// speculators sell on E_{p_{t+1}} <= E_{p_t} (ties sell).
pub fn classify_event(beliefs: &BeliefState, fv_t: f64) -> EventLabel {
    let fund_buys = beliefs.anchor <= fv_t;
    let spec_sells = beliefs.expected_price_next <= beliefs.expected_price;
    match (fund_buys, spec_sells) {
        (true, true) => EventLabel::E1,
        (true, false) => EventLabel::E2,
        (false, true) => EventLabel::E3,
        (false, false) => EventLabel::E4,
    }
}

// ---------------------------------------------------------------------------
// Per-event closed forms
// ---------------------------------------------------------------------------

/// Demand and supply head counts (B_t, A_t) for an event. They always sum
/// to the population total: noise traders split evenly, fundamentalists and
/// speculators go whole-sided.
pub fn event_counts(event: EventLabel, pop: &HeteroPopulation) -> (f64, f64) {
    let hn = 0.5 * pop.j_noise as f64;
    let jf = pop.j_fund as f64;
    let js = pop.j_spec as f64;
    match event {
        EventLabel::E1 => (hn + jf, hn + js),
        EventLabel::E2 => (hn + jf + js, hn),
        EventLabel::E3 => (hn, hn + jf + js),
        EventLabel::E4 => (hn + js, hn + jf),
    }
}

/// Closed-form demand/supply imbalance B_t/A_t - 1 for the event.
pub fn event_imbalance(event: EventLabel, pop: &HeteroPopulation) -> Result<f64, EngineError> {
    let hn = 0.5 * pop.j_noise as f64;
    let jf = pop.j_fund as f64;
    let js = pop.j_spec as f64;
    match event {
        EventLabel::E1 => {
            if hn + js <= 0.0 {
                return Err(degenerate_supply(event));
            }
            Ok((hn + jf) / (hn + js) - 1.0)
        }
        EventLabel::E2 => {
            if pop.j_noise == 0 {
                return Err(degenerate_noise(event));
            }
            Ok(2.0 * (jf + js) / pop.j_noise as f64)
        }
        EventLabel::E3 => {
            if pop.j_noise == 0 {
                return Err(degenerate_noise(event));
            }
            Ok(hn / (hn + jf + js) - 1.0)
        }
        EventLabel::E4 => {
            if hn + jf <= 0.0 {
                return Err(degenerate_supply(event));
            }
            Ok((hn + js) / (hn + jf) - 1.0)
        }
    }
}

fn degenerate_noise(event: EventLabel) -> EngineError {
    EngineError::DegenerateMarket(format!(
        "event {event} with no noise traders leaves one market side empty"
    ))
}

fn degenerate_supply(event: EventLabel) -> EngineError {
    EngineError::DegenerateMarket(format!(
        "event {event} has a vanishing demand or supply count"
    ))
}

/// Prevailing bid and ask for the event, given the three average quotes.
///
/// With no fundamentalists and no speculators every event collapses to
/// bid = ask = q_noise, the homogeneous market.
pub fn event_bid_ask(
    event: EventLabel,
    pop: &HeteroPopulation,
    q_noise: f64,
    q_fund: f64,
    q_spec: f64,
) -> Result<EventQuotes, EngineError> {
    if pop.j_fund == 0 && pop.j_spec == 0 {
        if pop.j_noise == 0 {
            return Err(EngineError::DegenerateMarket("population is empty".into()));
        }
        return Ok(EventQuotes {
            bid: q_noise,
            ask: q_noise,
            mid: q_noise,
        });
    }
    let hn = 0.5 * pop.j_noise as f64;
    let jf = pop.j_fund as f64;
    let js = pop.j_spec as f64;
    let (bid, ask) = match event {
        EventLabel::E1 => {
            if hn + jf <= 0.0 || hn + js <= 0.0 {
                return Err(degenerate_supply(event));
            }
            (
                (hn * q_noise + jf * q_fund) / (hn + js),
                (hn * q_noise + js * q_spec) / (hn + jf),
            )
        }
        EventLabel::E2 => {
            if pop.j_noise == 0 {
                return Err(degenerate_noise(event));
            }
            (
                (hn * q_noise + jf * q_fund + js * q_spec) / hn,
                hn * q_noise / (hn + jf + js),
            )
        }
        EventLabel::E3 => {
            if pop.j_noise == 0 {
                return Err(degenerate_noise(event));
            }
            (
                hn * q_noise / (hn + jf + js),
                (hn * q_noise + jf * q_fund + js * q_spec) / hn,
            )
        }
        EventLabel::E4 => {
            if hn + jf <= 0.0 || hn + js <= 0.0 {
                return Err(degenerate_supply(event));
            }
            (
                (hn * q_noise + js * q_spec) / (hn + jf),
                (hn * q_noise + jf * q_fund) / (hn + js),
            )
        }
    };
    Ok(EventQuotes {
        bid,
        ask,
        mid: 0.5 * (bid + ask),
    })
}

// ---------------------------------------------------------------------------
// Path construction
// ---------------------------------------------------------------------------

/// Runs the heterogeneous market over the horizon. The path price is the
/// mid (bid + ask)/2 each period, including periods where the spread is
/// closed; beliefs and noise quotes anchor to the previous period mid.
pub fn hetero_price_path(
    asset: &AssetSpec,
    pop: &HeteroPopulation,
    params: &StrategyParams,
    horizon: u32,
) -> Result<HeteroResult, EngineError> {
    asset.validate_for_horizon(horizon)?;
    let mean_div = asset.mean_dividend();
    let fv_1 = fv_unchecked(asset, 1, horizon);

    let mut beliefs = BeliefState::initial(fv_1, mean_div);
    let mut mid_prev = fv_1;
    let mut cumulative = 0.0;
    let mut records = Vec::with_capacity(horizon as usize);
    let mut path_records = Vec::with_capacity(horizon as usize);

    for t in 1..=horizon {
        let fv_t = fv_unchecked(asset, t, horizon);
        let fv_next = fv_unchecked(asset, t + 1, horizon);
        beliefs = update_beliefs(&beliefs, mid_prev, fv_t, fv_next, params, mean_div);
        let event = classify_event(&beliefs, fv_t);

        let q_fund = 0.5 * (beliefs.anchor + fv_t);
        let q_spec = 0.5 * (beliefs.expected_price_next + beliefs.expected_price);
        let q_noise = noise_quote_mean(asset, fv_t, mid_prev);

        let quotes = event_bid_ask(event, pop, q_noise, q_fund, q_spec)?;
        let imbalance = event_imbalance(event, pop)?;
        cumulative += imbalance;

        records.push(HeteroPeriodRecord {
            t,
            event,
            imbalance,
            cumulative_imbalance: cumulative,
            bid: quotes.bid,
            ask: quotes.ask,
            mid: quotes.mid,
            q_noise,
            q_fund,
            q_spec,
        });
        path_records.push(PeriodRecord {
            t,
            fv: fv_t,
            price: quotes.mid,
            bid: quotes.bid,
            ask: quotes.ask,
            imbalance,
            rd: 0.0,
            event: Some(event),
        });
        mid_prev = quotes.mid;
    }

    Ok(HeteroResult {
        path: PricePath::new(path_records)?,
        records,
    })
}

/// Open-spread condition of the limit case (alpha_f = 1, gamma1 = 0,
/// J_F = J_S): the ask exceeds the bid iff gamma2 > 2 FV_t / (2 FV_t - d).
pub fn spread_condition(fv_t: f64, mean_dividend: f64, gamma2: f64) -> Result<bool, EngineError> {
    let denom = 2.0 * fv_t - mean_dividend;
    if denom <= 0.0 {
        return Err(EngineError::Domain(format!(
            "spread condition requires 2 FV_t > mean dividend; got FV_t = {fv_t}, d = {mean_dividend}"
        )));
    }
    Ok(gamma2 > 2.0 * fv_t / denom)
}

// ---------------------------------------------------------------------------
// Two-asset limit case
// ---------------------------------------------------------------------------

/// How fundamentalists and speculators act on the second asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Asset2Mode {
    /// Same side as asset 1, quoting like noise traders.
    FactorDirectional,
    /// Opposite side from asset 1, quoting like noise traders.
    FactorMarketNeutral,
    /// Fundamentalists and speculators run their strategies on asset 2 too,
    /// with asset-2 strategy parameters.
    SameStrategy,
}

impl std::fmt::Display for Asset2Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Asset2Mode::FactorDirectional => "factor_directional",
            Asset2Mode::FactorMarketNeutral => "factor_market_neutral",
            Asset2Mode::SameStrategy => "same_strategy",
        };
        f.write_str(s)
    }
}

/// Two-asset heterogeneous result with the event records of both books.
#[derive(Debug, Clone)]
pub struct TwoAssetHeteroResult {
    pub path_1: PricePath,
    pub path_2: PricePath,
    pub records_1: Vec<HeteroPeriodRecord>,
    pub records_2: Vec<HeteroPeriodRecord>,
    /// Per-period bid = ask flags.
    pub equilibrium_1: Vec<bool>,
    pub equilibrium_2: Vec<bool>,
}

const LIMIT_CASE: &str = "expectations ignore the previous trading price (alpha_f = 1, gamma1 = 0)";
const ZERO_DIV_2: &str = "asset 2 has zero mean dividend";

/// Two-asset dynamics in the limit case where asset-1 expectations ignore
/// past prices (alpha_f = 1, gamma1 = 0), so event E1 is realized on asset 1
/// every period. Asset 2 follows the chosen mode; the factor modes quote
/// asset 2 like noise traders, the same-strategy mode replays the strategies
/// with asset-2 parameters and requires a zero mean dividend there.
pub fn two_asset_hetero_paths(
    asset1: &AssetSpec,
    asset2: &AssetSpec,
    pop: &HeteroPopulation,
    params1: &StrategyParams,
    params2: &StrategyParams,
    mode: Asset2Mode,
    horizon: u32,
) -> Result<TwoAssetHeteroResult, EngineError> {
    if params1.alpha_f != 1.0 || params1.gamma1 != 0.0 {
        return Err(EngineError::assumption(
            LIMIT_CASE,
            format!(
                "asset-1 strategy has alpha_f = {}, gamma1 = {}",
                params1.alpha_f, params1.gamma1
            ),
        ));
    }
    if mode == Asset2Mode::SameStrategy {
        if params2.alpha_f != 1.0 || params2.gamma1 != 0.0 {
            return Err(EngineError::assumption(
                LIMIT_CASE,
                format!(
                    "asset-2 strategy has alpha_f = {}, gamma1 = {}",
                    params2.alpha_f, params2.gamma1
                ),
            ));
        }
        if asset2.mean_dividend() != 0.0 {
            return Err(EngineError::assumption(
                ZERO_DIV_2,
                format!("asset-2 mean dividend is {}", asset2.mean_dividend()),
            ));
        }
    }

    let one = hetero_price_path(asset1, pop, params1, horizon)?;
    let two = match mode {
        Asset2Mode::SameStrategy => hetero_price_path(asset2, pop, params2, horizon)?,
        Asset2Mode::FactorDirectional => factor_mode_path(asset2, pop, EventLabel::E1, horizon)?,
        Asset2Mode::FactorMarketNeutral => factor_mode_path(asset2, pop, EventLabel::E4, horizon)?,
    };

    let eq = |records: &[HeteroPeriodRecord]| records.iter().map(|r| r.bid == r.ask).collect();
    Ok(TwoAssetHeteroResult {
        equilibrium_1: eq(&one.records),
        equilibrium_2: eq(&two.records),
        path_1: one.path,
        path_2: two.path,
        records_1: one.records,
        records_2: two.records,
    })
}

/// Asset-2 dynamics when every trader quotes the noise quote and the
/// fundamentalist/speculator sides are mapped through a market factor.
/// Directional keeps the asset-1 pattern (E1: fundamentalists buy,
/// speculators sell); market-neutral flips both sides (E4).
fn factor_mode_path(
    asset2: &AssetSpec,
    pop: &HeteroPopulation,
    event: EventLabel,
    horizon: u32,
) -> Result<HeteroResult, EngineError> {
    asset2.validate_for_horizon(horizon)?;
    let mut mid_prev = fv_unchecked(asset2, 1, horizon);
    let mut cumulative = 0.0;
    let mut records = Vec::with_capacity(horizon as usize);
    let mut path_records = Vec::with_capacity(horizon as usize);

    for t in 1..=horizon {
        let fv_t = fv_unchecked(asset2, t, horizon);
        let q = noise_quote_mean(asset2, fv_t, mid_prev);
        // With equal fundamentalist and speculator counts demand equals
        // supply and every trader posts q, so the book collapses onto the
        // quote exactly (the equilibrium of the factor regimes).
        let quotes = if pop.j_fund == pop.j_spec {
            EventQuotes {
                bid: q,
                ask: q,
                mid: q,
            }
        } else {
            event_bid_ask(event, pop, q, q, q)?
        };
        let imbalance = event_imbalance(event, pop)?;
        cumulative += imbalance;
        records.push(HeteroPeriodRecord {
            t,
            event,
            imbalance,
            cumulative_imbalance: cumulative,
            bid: quotes.bid,
            ask: quotes.ask,
            mid: quotes.mid,
            q_noise: q,
            q_fund: q,
            q_spec: q,
        });
        path_records.push(PeriodRecord {
            t,
            fv: fv_t,
            price: quotes.mid,
            bid: quotes.bid,
            ask: quotes.ask,
            imbalance,
            rd: 0.0,
            event: Some(event),
        });
        mid_prev = quotes.mid;
    }

    Ok(HeteroResult {
        path: PricePath::new(path_records)?,
        records,
    })
}

// ---------------------------------------------------------------------------
// RD surfaces over the noise share
// ---------------------------------------------------------------------------

/// Second axis of the heterogeneous RD surface.
#[derive(Debug, Clone)]
pub enum HeteroSurfaceAxis {
    /// Vary asset-2 confusion under the directional factor mode.
    Kappa2(Vec<f64>),
    /// Vary the asset-2 speculator weight under the same-strategy mode.
    Gamma22(Vec<f64>),
}

impl HeteroSurfaceAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            HeteroSurfaceAxis::Kappa2(v) => v,
            HeteroSurfaceAxis::Gamma22(v) => v,
        }
    }
}

/// Grid: noise-trader counts against the chosen second axis; the remaining
/// population is split evenly between fundamentalists and speculators.
#[derive(Debug, Clone)]
pub struct HeteroGrid {
    pub j_noise: Vec<u32>,
    pub total: u32,
    pub axis: HeteroSurfaceAxis,
}

#[derive(Debug, Clone)]
pub struct HeteroCell {
    pub j_noise: u32,
    pub axis_value: f64,
    /// (RD_1, RD_2) or the per-cell failure.
    pub outcome: Result<(f64, f64), EngineError>,
}

/// RD_1 and RD_2 per (J_N, axis) cell, row-major with J_N outermost.
/// Cells whose population cannot be split evenly are flagged. Cells run
/// in parallel with deterministic output order.
pub fn hetero_rd_surface(
    asset1: &AssetSpec,
    asset2: &AssetSpec,
    params1: &StrategyParams,
    params2: &StrategyParams,
    grid: &HeteroGrid,
    horizon: u32,
) -> Vec<HeteroCell> {
    let mut points = Vec::with_capacity(grid.j_noise.len() * grid.axis.values().len());
    for &j_n in &grid.j_noise {
        for &value in grid.axis.values() {
            points.push((j_n, value));
        }
    }
    points
        .into_par_iter()
        .map(|(j_n, value)| HeteroCell {
            j_noise: j_n,
            axis_value: value,
            outcome: hetero_surface_cell(
                asset1, asset2, params1, params2, grid, j_n, value, horizon,
            ),
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn hetero_surface_cell(
    asset1: &AssetSpec,
    asset2: &AssetSpec,
    params1: &StrategyParams,
    params2: &StrategyParams,
    grid: &HeteroGrid,
    j_n: u32,
    value: f64,
    horizon: u32,
) -> Result<(f64, f64), EngineError> {
    let rest = grid.total.checked_sub(j_n).ok_or_else(|| {
        EngineError::InvalidParameter(format!(
            "infeasible cell: j_noise = {j_n} exceeds the total population {}",
            grid.total
        ))
    })?;
    if rest % 2 != 0 {
        return Err(EngineError::InvalidParameter(format!(
            "infeasible cell: j_fund = j_spec = (N - j_noise)/2 is not integral for j_noise = {j_n}"
        )));
    }
    let pop = HeteroPopulation::new(j_n, rest / 2, rest / 2)?;
    let result = match grid.axis {
        HeteroSurfaceAxis::Kappa2(_) => two_asset_hetero_paths(
            asset1,
            &asset2.with_kappa(value)?,
            &pop,
            params1,
            params2,
            Asset2Mode::FactorDirectional,
            horizon,
        )?,
        HeteroSurfaceAxis::Gamma22(_) => two_asset_hetero_paths(
            asset1,
            asset2,
            &pop,
            params1,
            &params2.with_gamma2(value)?,
            Asset2Mode::SameStrategy,
            horizon,
        )?,
    };
    Ok((result.path_1.average_rd(), result.path_2.average_rd()))
}
