//! Monte Carlo session simulator with batch clearing.
//!
//! Every agent draws a side each period (noise traders by a Bernoulli
//! draw, factor traders by mapping the asset-1 signal, fundamentalists and
//! speculators by their belief rules), draws an independent confusion value
//! u ~ U[0, kappa FV_t) and posts the quote (1-alpha) u + alpha p_{t-1}.
//! The prevailing bid is the buyers' quote value divided by the seller
//! count, the prevailing ask the sellers' quote value divided by the buyer
//! count, and the session price their midpoint.
//!
//! Sessions are independent ChaCha streams keyed by the run seed, so runs
//! are reproducible and parallel-safe; aggregation reduces in session order
//! regardless of thread scheduling. Realized dividends are never drawn:
//! the quote rules never reference them, and cash moves only when bids are
//! charged in the bankruptcy audit.
//!
//! Aggregates are pooled ratio estimates: per period the bid path is the
//! pooled buyers' quote value over the pooled seller count (and likewise
//! for the ask), with linearized standard errors. Averaging per-session
//! price ratios instead would carry an O(1/N) Jensen bias that a 10^4
//! session run resolves at many standard errors; the pooled form is the
//! market-clearing equation itself, realized on the sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::EngineError;
use crate::factor::FactorPopulation;
use crate::hetero::{classify_event, update_beliefs, BeliefState, HeteroPopulation, StrategyParams};
use crate::market::{buyer_probability, fv_unchecked, EventLabel, MarketSpec};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Trader population driving side selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Population {
    Factor(FactorPopulation),
    Hetero(HeteroPopulation),
}

impl Population {
    pub fn total(&self) -> u32 {
        match self {
            Population::Factor(p) => p.total(),
            Population::Hetero(p) => p.total(),
        }
    }
}

/// Market-clearing discipline. Orders accumulate over the period and clear
/// simultaneously.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clearing {
    #[default]
    Batch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub sessions: u32,
    pub seed: u64,
    pub population: Population,
    pub market: MarketSpec,
    pub clearing: Clearing,
    /// Belief parameters; required when the population contains
    /// fundamentalists or speculators.
    pub strategy: Option<StrategyParams>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.sessions == 0 {
            return Err(EngineError::InvalidParameter(
                "sessions must be at least 1".into(),
            ));
        }
        if let Population::Hetero(pop) = &self.population {
            if pop.j_fund + pop.j_spec > 0 {
                if self.strategy.is_none() {
                    return Err(EngineError::InvalidParameter(
                        "heterogeneous populations require strategy parameters".into(),
                    ));
                }
                if self.market.assets().len() != 1 {
                    return Err(EngineError::assumption(
                        "fundamentalist/speculator sessions trade a single asset",
                        "two-asset heterogeneous simulation is not supported",
                    ));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Session outcomes
// ---------------------------------------------------------------------------

/// One period of one session for one asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionPeriod {
    pub buyers: u32,
    pub sellers: u32,
    pub bid_quote_sum: f64,
    pub ask_quote_sum: f64,
    /// Sum of every posted quote (both sides).
    pub quote_sum: f64,
    pub max_quote: f64,
    /// Buyers' quote value over the seller count; `None` when a side is
    /// empty.
    pub prevailing_bid: Option<f64>,
    pub prevailing_ask: Option<f64>,
    /// Mid of the prevailing bid and ask.
    pub price: Option<f64>,
}

/// Realized quotes and prices of one session, per asset and period.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub per_asset: Vec<Vec<SessionPeriod>>,
}

/// Per-period pooled statistics for one asset.
#[derive(Debug, Clone, Copy)]
pub struct PeriodStats {
    pub t: u32,
    pub mean_bid: f64,
    pub se_bid: f64,
    pub mean_ask: f64,
    pub se_ask: f64,
    pub mean_price: f64,
    pub se_price: f64,
    pub mean_quote: f64,
    pub se_quote: f64,
    pub buyer_fraction: f64,
    pub se_buyer_fraction: f64,
    /// Sessions whose period was one-sided and therefore excluded from the
    /// price statistics.
    pub excluded_sessions: u32,
}

#[derive(Debug, Clone)]
pub struct AssetAggregate {
    pub periods: Vec<PeriodStats>,
    /// Largest quote any agent posted for this asset across all sessions.
    pub max_quote: f64,
}

#[derive(Debug, Clone)]
pub struct McAggregate {
    pub per_asset: Vec<AssetAggregate>,
    pub sessions: u32,
}

// ---------------------------------------------------------------------------
// Simulation core
// ---------------------------------------------------------------------------

/// Behavioural type of one simulated agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraderType {
    Noise,
    Directional,
    MarketNeutral,
    Fundamentalist,
    Speculator,
}

/// State of one agent account: cash, share inventory and behavioural type.
/// The averaged session dynamics never constrain inventories (agents start
/// with one share and enough cash under the endowment bound), so the
/// simulator materializes accounts only for the bankruptcy audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub cash: f64,
    pub shares: u32,
    pub trader_type: TraderType,
}

/// Maps an agent index to its type. Agents are laid out noise-first, then
/// directional/fundamentalist, then market-neutral/speculator.
pub fn trader_type(population: &Population, index: u32) -> TraderType {
    match population {
        Population::Factor(p) => {
            if index < p.j_noise {
                TraderType::Noise
            } else if index < p.j_noise + p.j_directional {
                TraderType::Directional
            } else {
                TraderType::MarketNeutral
            }
        }
        Population::Hetero(p) => {
            if index < p.j_noise {
                TraderType::Noise
            } else if index < p.j_noise + p.j_fund {
                TraderType::Fundamentalist
            } else {
                TraderType::Speculator
            }
        }
    }
}

/// Runs one session; `on_bid(agent, t, asset, quote)` fires for every
/// posted bid so callers can audit cash accounts.
fn simulate_session(
    config: &SimulationConfig,
    session: u32,
    mut on_bid: impl FnMut(u32, u32, usize, f64),
) -> SessionOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(session as u64);

    let assets = config.market.assets();
    let horizon = config.market.periods();
    let n = config.population.total();

    // Per-asset anchor: the previous period's realized mean traded quote,
    // initialized at the period-1 fundamental value.
    let mut anchors: Vec<f64> = assets
        .iter()
        .map(|a| fv_unchecked(a, 1, horizon))
        .collect();

    let mut beliefs = match (&config.population, &config.strategy) {
        (Population::Hetero(_), Some(_)) => {
            let a = &assets[0];
            Some(BeliefState::initial(
                fv_unchecked(a, 1, horizon),
                a.mean_dividend(),
            ))
        }
        _ => None,
    };

    let mut per_asset: Vec<Vec<SessionPeriod>> =
        vec![Vec::with_capacity(horizon as usize); assets.len()];

    for t in 1..=horizon {
        let fv: Vec<f64> = assets.iter().map(|a| fv_unchecked(a, t, horizon)).collect();
        let pi: Vec<f64> = assets
            .iter()
            .map(|a| buyer_probability(a.phi(), t))
            .collect();

        // Fundamentalist/speculator sides are deterministic given the
        // session's price history.
        let mut hetero_sides = (true, false);
        if let (Some(state), Some(params)) = (beliefs.as_mut(), config.strategy.as_ref()) {
            let a = &assets[0];
            let fv_next = fv_unchecked(a, t + 1, horizon);
            *state = update_beliefs(state, anchors[0], fv[0], fv_next, params, a.mean_dividend());
            hetero_sides = match classify_event(state, fv[0]) {
                EventLabel::E1 => (true, false),
                EventLabel::E2 => (true, true),
                EventLabel::E3 => (false, false),
                EventLabel::E4 => (false, true),
            };
        }

        let mut buyers = vec![0u32; assets.len()];
        let mut sellers = vec![0u32; assets.len()];
        let mut bid_sums = vec![0.0f64; assets.len()];
        let mut ask_sums = vec![0.0f64; assets.len()];
        let mut quote_sums = vec![0.0f64; assets.len()];
        let mut max_quotes = vec![0.0f64; assets.len()];

        for agent in 0..n {
            let kind = trader_type(&config.population, agent);
            // Side per asset. Factor traders read one signal from asset 1.
            let mut buys = [false; 2];
            match kind {
                TraderType::Noise => {
                    for (i, b) in buys.iter_mut().take(assets.len()).enumerate() {
                        *b = rng.gen_bool(pi[i]);
                    }
                }
                TraderType::Directional | TraderType::MarketNeutral => {
                    let signal = rng.gen_bool(pi[0]);
                    buys[0] = signal;
                    if assets.len() > 1 {
                        buys[1] = match kind {
                            TraderType::Directional => signal,
                            _ => !signal,
                        };
                    }
                }
                TraderType::Fundamentalist => buys[0] = hetero_sides.0,
                TraderType::Speculator => buys[0] = hetero_sides.1,
            }

            for i in 0..assets.len() {
                let u: f64 = rng.gen_range(0.0..assets[i].kappa() * fv[i]);
                let quote = (1.0 - assets[i].alpha()) * u + assets[i].alpha() * anchors[i];
                quote_sums[i] += quote;
                max_quotes[i] = max_quotes[i].max(quote);
                if buys[i] {
                    buyers[i] += 1;
                    bid_sums[i] += quote;
                    on_bid(agent, t, i, quote);
                } else {
                    sellers[i] += 1;
                    ask_sums[i] += quote;
                }
            }
        }

        for i in 0..assets.len() {
            let two_sided = buyers[i] > 0 && sellers[i] > 0;
            let prevailing_bid = two_sided.then(|| bid_sums[i] / sellers[i] as f64);
            let prevailing_ask = two_sided.then(|| ask_sums[i] / buyers[i] as f64);
            let price = prevailing_bid
                .zip(prevailing_ask)
                .map(|(b, a)| 0.5 * (b + a));
            per_asset[i].push(SessionPeriod {
                buyers: buyers[i],
                sellers: sellers[i],
                bid_quote_sum: bid_sums[i],
                ask_quote_sum: ask_sums[i],
                quote_sum: quote_sums[i],
                max_quote: max_quotes[i],
                prevailing_bid,
                prevailing_ask,
                price,
            });
            // The next period anchors to this period's mean traded quote.
            anchors[i] = quote_sums[i] / n as f64;
        }
    }

    SessionOutcome { per_asset }
}

/// Runs one session and returns its realized outcome.
pub fn run_session(config: &SimulationConfig, session: u32) -> Result<SessionOutcome, EngineError> {
    config.validate()?;
    Ok(simulate_session(config, session, |_, _, _, _| {}))
}

/// Runs all sessions in parallel and aggregates pooled per-period bid, ask
/// and price paths with standard errors.
pub fn run_sessions(config: &SimulationConfig) -> Result<McAggregate, EngineError> {
    config.validate()?;
    let outcomes: Vec<SessionOutcome> = (0..config.sessions)
        .into_par_iter()
        .map(|s| simulate_session(config, s, |_, _, _, _| {}))
        .collect();
    Ok(aggregate(config, &outcomes))
}

fn aggregate(config: &SimulationConfig, outcomes: &[SessionOutcome]) -> McAggregate {
    let n_agents = config.population.total() as f64;
    let horizon = config.market.periods() as usize;
    let n_assets = config.market.assets().len();
    let mut per_asset = Vec::with_capacity(n_assets);

    for asset in 0..n_assets {
        let mut periods = Vec::with_capacity(horizon);
        let mut max_quote = 0.0f64;
        for t in 0..horizon {
            let rows: Vec<&SessionPeriod> =
                outcomes.iter().map(|o| &o.per_asset[asset][t]).collect();
            max_quote = rows
                .iter()
                .fold(max_quote, |acc, r| acc.max(r.max_quote));
            periods.push(period_stats(t as u32 + 1, &rows, n_agents));
        }
        per_asset.push(AssetAggregate { periods, max_quote });
    }

    McAggregate {
        per_asset,
        sessions: config.sessions,
    }
}

fn period_stats(t: u32, rows: &[&SessionPeriod], n_agents: f64) -> PeriodStats {
    let included: Vec<&&SessionPeriod> =
        rows.iter().filter(|r| r.price.is_some()).collect();
    let excluded_sessions = (rows.len() - included.len()) as u32;

    // Plain session means: quote level and buyer fraction.
    let quotes: Vec<f64> = rows.iter().map(|r| r.quote_sum / n_agents).collect();
    let (mean_quote, se_quote) = mean_se(&quotes);
    let fractions: Vec<f64> = rows
        .iter()
        .map(|r| r.buyers as f64 / n_agents)
        .collect();
    let (buyer_fraction, se_buyer_fraction) = mean_se(&fractions);

    if included.is_empty() {
        return PeriodStats {
            t,
            mean_bid: f64::NAN,
            se_bid: f64::NAN,
            mean_ask: f64::NAN,
            se_ask: f64::NAN,
            mean_price: f64::NAN,
            se_price: f64::NAN,
            mean_quote,
            se_quote,
            buyer_fraction,
            se_buyer_fraction,
            excluded_sessions,
        };
    }

    let m = included.len() as f64;
    let sum_sellers: f64 = included.iter().map(|r| r.sellers as f64).sum();
    let sum_buyers: f64 = included.iter().map(|r| r.buyers as f64).sum();
    let sum_bid: f64 = included.iter().map(|r| r.bid_quote_sum).sum();
    let sum_ask: f64 = included.iter().map(|r| r.ask_quote_sum).sum();

    let mean_bid = sum_bid / sum_sellers;
    let mean_ask = sum_ask / sum_buyers;
    let mean_price = 0.5 * (mean_bid + mean_ask);
    let mean_sellers = sum_sellers / m;
    let mean_buyers = sum_buyers / m;

    // Linearized ratio-estimator errors: residuals of the numerator against
    // the fitted ratio times the denominator.
    let bid_infl: Vec<f64> = included
        .iter()
        .map(|r| (r.bid_quote_sum - mean_bid * r.sellers as f64) / mean_sellers)
        .collect();
    let ask_infl: Vec<f64> = included
        .iter()
        .map(|r| (r.ask_quote_sum - mean_ask * r.buyers as f64) / mean_buyers)
        .collect();
    let price_infl: Vec<f64> = bid_infl
        .iter()
        .zip(&ask_infl)
        .map(|(b, a)| 0.5 * (b + a))
        .collect();

    PeriodStats {
        t,
        mean_bid,
        se_bid: se_of_mean(&bid_infl),
        mean_ask,
        se_ask: se_of_mean(&ask_infl),
        mean_price,
        se_price: se_of_mean(&price_infl),
        mean_quote,
        se_quote,
        buyer_fraction,
        se_buyer_fraction,
        excluded_sessions,
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    (mean, se_of_mean(&centered))
}

/// Standard error of the mean of `deviations` around zero.
fn se_of_mean(deviations: &[f64]) -> f64 {
    let n = deviations.len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let var = deviations.iter().map(|d| d * d).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

// ---------------------------------------------------------------------------
// Bankruptcy audit
// ---------------------------------------------------------------------------

/// A cash account that went negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CashViolation {
    pub session: u32,
    pub period: u32,
    pub agent: u32,
    /// How far below zero the account went at that point.
    pub shortfall: f64,
}

#[derive(Debug, Clone)]
pub struct BankruptcyReport {
    pub ok: bool,
    /// Earliest violation in (session, period, agent) order.
    pub first_violation: Option<CashViolation>,
    /// Worst observed overdraft across all agents and sessions (zero when
    /// funding suffices).
    pub worst_shortfall: f64,
}

/// Charges every posted bid against each agent's cash (the worst case where
/// all bids fill) and reports whether any account goes negative when agents
/// start with `funding` in cash.
pub fn verify_no_bankruptcy(
    config: &SimulationConfig,
    funding: f64,
) -> Result<BankruptcyReport, EngineError> {
    config.validate()?;
    let n = config.population.total() as usize;

    let reports: Vec<(Option<CashViolation>, f64)> = (0..config.sessions)
        .into_par_iter()
        .map(|session| {
            let mut agents: Vec<AgentState> = (0..n)
                .map(|i| AgentState {
                    cash: funding,
                    shares: 1,
                    trader_type: trader_type(&config.population, i as u32),
                })
                .collect();
            let mut first: Option<CashViolation> = None;
            let mut worst = 0.0f64;
            simulate_session(config, session, |agent, period, _asset, bid| {
                let account = &mut agents[agent as usize];
                account.cash -= bid;
                if account.cash < 0.0 {
                    worst = worst.max(-account.cash);
                    if first.is_none() {
                        first = Some(CashViolation {
                            session,
                            period,
                            agent,
                            shortfall: -account.cash,
                        });
                    }
                }
            });
            (first, worst)
        })
        .collect();

    let mut first_violation: Option<CashViolation> = None;
    let mut worst_shortfall = 0.0f64;
    for (violation, worst) in reports {
        worst_shortfall = worst_shortfall.max(worst);
        if let Some(v) = violation {
            let better = match &first_violation {
                None => true,
                Some(cur) => (v.session, v.period, v.agent) < (cur.session, cur.period, cur.agent),
            };
            if better {
                first_violation = Some(v);
            }
        }
    }

    Ok(BankruptcyReport {
        ok: first_violation.is_none(),
        first_violation,
        worst_shortfall,
    })
}
