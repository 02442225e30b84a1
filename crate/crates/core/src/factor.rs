//! Two-asset extension with noise, directional and market-neutral traders.
//!
//! All traders read the buy/sell signal from asset 1. Directional traders
//! take the same side on asset 2 (factor [1, 1]), market-neutral traders the
//! opposite side (factor [1, -1]); noise traders draw an independent side
//! with probability pi_2 = 1/2. Asset 1 follows the homogeneous recursion;
//! asset 2 picks up the demand/supply imbalance that the factor traders
//! import from asset 1.

use rayon::prelude::*;

use crate::error::EngineError;
use crate::market::{
    buyer_probability, fv_unchecked, noise_quote_mean, AssetSpec, PeriodRecord, PricePath,
};

/// Trader counts by factor style.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorPopulation {
    pub j_noise: u32,
    pub j_directional: u32,
    pub j_market_neutral: u32,
}

impl FactorPopulation {
    pub fn new(j_noise: u32, j_directional: u32, j_market_neutral: u32) -> Result<Self, EngineError> {
        let pop = FactorPopulation {
            j_noise,
            j_directional,
            j_market_neutral,
        };
        if pop.total() == 0 {
            return Err(EngineError::DegenerateMarket(
                "population is empty; prevailing prices are undefined".into(),
            ));
        }
        Ok(pop)
    }

    pub fn total(&self) -> u32 {
        self.j_noise + self.j_directional + self.j_market_neutral
    }
}

/// Per-asset market-clearing verdict for given buyer probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquilibriumFlags {
    pub asset1: bool,
    pub asset2: bool,
}

/// Asset 1 clears iff pi_1 = 1/2. Asset 2 clears iff pi_2 = 1/2 and
/// either the directional and market-neutral counts coincide or asset 1
/// itself clears.
pub fn check_equilibrium_conditions(
    pop: &FactorPopulation,
    pi1: f64,
    pi2: f64,
) -> EquilibriumFlags {
    let asset1 = pi1 == 0.5;
    let asset2 = pi2 == 0.5 && (pop.j_directional == pop.j_market_neutral || asset1);
    EquilibriumFlags { asset1, asset2 }
}

/// Joint result for a two-asset run.
#[derive(Debug, Clone)]
pub struct TwoAssetResult {
    pub path_1: PricePath,
    pub path_2: PricePath,
    pub equilibrium_1: Vec<bool>,
    pub equilibrium_2: Vec<bool>,
}

/// Average price paths for both assets with the buyer probability of asset 1
/// driven by its weak-foresight slope. Noise traders on asset 2 buy with
/// probability 1/2, which requires phi_2 = 0.
pub fn factor_price_paths(
    asset1: &AssetSpec,
    asset2: &AssetSpec,
    pop: &FactorPopulation,
    horizon: u32,
) -> Result<TwoAssetResult, EngineError> {
    asset1.validate_for_horizon(horizon)?;
    if asset2.phi() != 0.0 {
        return Err(EngineError::assumption(
            "noise traders buy asset 2 with probability 1/2",
            format!("asset 2 must have phi = 0, got {}", asset2.phi()),
        ));
    }
    let phi1 = asset1.phi();
    paths_with_pi1(asset1, asset2, pop, horizon, |t| buyer_probability(phi1, t))
}

/// Same dynamics with a constant, externally chosen buyer probability for
/// asset 1 (used by the RD surface over pi_1).
pub fn factor_price_paths_const_pi1(
    asset1: &AssetSpec,
    asset2: &AssetSpec,
    pop: &FactorPopulation,
    pi1: f64,
    horizon: u32,
) -> Result<TwoAssetResult, EngineError> {
    paths_with_pi1(asset1, asset2, pop, horizon, |_| pi1)
}

fn paths_with_pi1(
    asset1: &AssetSpec,
    asset2: &AssetSpec,
    pop: &FactorPopulation,
    horizon: u32,
    pi1_at: impl Fn(u32) -> f64,
) -> Result<TwoAssetResult, EngineError> {
    asset2.validate_for_horizon(horizon)?;
    if pop.total() == 0 {
        return Err(EngineError::DegenerateMarket("population is empty".into()));
    }

    let jn = pop.j_noise as f64;
    let jd = pop.j_directional as f64;
    let jmn = pop.j_market_neutral as f64;

    let mut records_1 = Vec::with_capacity(horizon as usize);
    let mut records_2 = Vec::with_capacity(horizon as usize);
    let mut eq_1 = Vec::with_capacity(horizon as usize);
    let mut eq_2 = Vec::with_capacity(horizon as usize);
    let mut prev_1 = fv_unchecked(asset1, 1, horizon);
    let mut prev_2 = fv_unchecked(asset2, 1, horizon);

    for t in 1..=horizon {
        let pi1 = pi1_at(t);
        if pi1 <= 0.0 || pi1 >= 1.0 {
            return Err(EngineError::DegenerateMarket(format!(
                "buyer probability pi_1 = {pi1} at t = {t}; prevailing prices require 0 < pi < 1"
            )));
        }
        let flags = check_equilibrium_conditions(pop, pi1, 0.5);

        // Asset 1: every trader type reads the same signal, so the
        // homogeneous formulas apply regardless of the population split.
        let fv1 = fv_unchecked(asset1, t, horizon);
        let q1 = noise_quote_mean(asset1, fv1, prev_1);
        let imb1 = pi1 / (1.0 - pi1) - 1.0;
        let p1 = q1 + imb1;
        records_1.push(PeriodRecord {
            t,
            fv: fv1,
            price: p1,
            bid: pi1 / (1.0 - pi1) * q1,
            ask: (1.0 - pi1) / pi1 * q1,
            imbalance: imb1,
            rd: 0.0,
            event: None,
        });
        eq_1.push(flags.asset1);
        prev_1 = p1;

        // Asset 2: demand collects noise buyers, directional traders on the
        // asset-1 buy signal and market-neutral traders on the sell signal.
        let fv2 = fv_unchecked(asset2, t, horizon);
        let q2 = noise_quote_mean(asset2, fv2, prev_2);
        let (p2, bid2, ask2, imb2) = if flags.asset2 {
            // Demand equals supply; the price collapses onto the quote.
            (q2, q2, q2, 0.0)
        } else {
            let demand = 0.5 * jn + jd * pi1 + jmn * (1.0 - pi1);
            let supply = 0.5 * jn + jd * (1.0 - pi1) + jmn * pi1;
            if demand <= 0.0 || supply <= 0.0 {
                return Err(EngineError::DegenerateMarket(format!(
                    "asset-2 demand/supply weights vanish at t = {t}"
                )));
            }
            let imb = demand / supply - 1.0;
            (q2 + imb, demand / supply * q2, supply / demand * q2, imb)
        };
        records_2.push(PeriodRecord {
            t,
            fv: fv2,
            price: p2,
            bid: bid2,
            ask: ask2,
            imbalance: imb2,
            rd: 0.0,
            event: None,
        });
        eq_2.push(flags.asset2);
        prev_2 = p2;
    }

    Ok(TwoAssetResult {
        path_1: PricePath::new(records_1)?,
        path_2: PricePath::new(records_2)?,
        equilibrium_1: eq_1,
        equilibrium_2: eq_2,
    })
}

// ---------------------------------------------------------------------------
// RD surface over (pi_1, J_MN)
// ---------------------------------------------------------------------------

/// Grid for the two-asset RD surface: asset-1 buyer probabilities against
/// market-neutral counts, with the noise count and the total population
/// fixed (J_D is the remainder).
#[derive(Debug, Clone)]
pub struct FactorGrid {
    pub pi1: Vec<f64>,
    pub j_market_neutral: Vec<u32>,
    pub j_noise: u32,
    pub total: u32,
}

#[derive(Debug, Clone)]
pub struct FactorCell {
    pub pi1: f64,
    pub j_market_neutral: u32,
    /// (RD_1, RD_2) or the per-cell failure.
    pub outcome: Result<(f64, f64), EngineError>,
}

/// RD_1 and RD_2 per grid cell, row-major with pi_1 outermost. Infeasible
/// cells (J_MN exceeding the non-noise population) are flagged and the sweep
/// continues. Cells run in parallel with deterministic output order.
pub fn factor_rd_surface(
    asset1: &AssetSpec,
    asset2: &AssetSpec,
    grid: &FactorGrid,
    horizon: u32,
) -> Vec<FactorCell> {
    let mut points = Vec::with_capacity(grid.pi1.len() * grid.j_market_neutral.len());
    for &pi1 in &grid.pi1 {
        for &j_mn in &grid.j_market_neutral {
            points.push((pi1, j_mn));
        }
    }
    points
        .into_par_iter()
        .map(|(pi1, j_mn)| FactorCell {
            pi1,
            j_market_neutral: j_mn,
            outcome: surface_cell(asset1, asset2, grid, pi1, j_mn, horizon),
        })
        .collect()
}

fn surface_cell(
    asset1: &AssetSpec,
    asset2: &AssetSpec,
    grid: &FactorGrid,
    pi1: f64,
    j_mn: u32,
    horizon: u32,
) -> Result<(f64, f64), EngineError> {
    let non_noise = grid.total.checked_sub(grid.j_noise).ok_or_else(|| {
        EngineError::InvalidParameter("j_noise exceeds the total population".into())
    })?;
    let j_d = non_noise.checked_sub(j_mn).ok_or_else(|| {
        EngineError::InvalidParameter(format!(
            "infeasible cell: J_MN = {j_mn} exceeds the non-noise population {non_noise}"
        ))
    })?;
    let pop = FactorPopulation::new(grid.j_noise, j_d, j_mn)?;
    let result = factor_price_paths_const_pi1(asset1, asset2, &pop, pi1, horizon)?;
    Ok((result.path_1.average_rd(), result.path_2.average_rd()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: u32 = 15;

    fn assets() -> (AssetSpec, AssetSpec) {
        (
            AssetSpec::reference_speculative(4.0, 0.85, 0.01).unwrap(),
            AssetSpec::reference_value(2.0, 0.85).unwrap(),
        )
    }

    #[test]
    fn asset2_imbalance_example() {
        // J_N=50, J_D=45, J_MN=5, pi_1=0.4: demand 46, supply 54.
        let (a1, a2) = assets();
        let pop = FactorPopulation::new(50, 45, 5).unwrap();
        let result = factor_price_paths_const_pi1(&a1, &a2, &pop, 0.4, T).unwrap();
        let imb = result.path_2.records()[0].imbalance;
        assert!((imb - (46.0 / 54.0 - 1.0)).abs() < 1e-12);
        assert!(imb < 0.0, "J_D > J_MN produces undervaluation");
    }

    #[test]
    fn equal_factor_counts_clear_asset2() {
        let (a1, a2) = assets();
        let pop = FactorPopulation::new(50, 25, 25).unwrap();
        let result = factor_price_paths(&a1, &a2, &pop, T).unwrap();
        for (r, eq) in result.path_2.records().iter().zip(&result.equilibrium_2) {
            assert!(*eq);
            assert_eq!(r.bid, r.ask);
            assert_eq!(r.imbalance, 0.0);
        }
        assert!(result.path_2.average_rd().abs() < 1e-12);
    }

    #[test]
    fn both_assets_clear_when_pi1_is_half() {
        let (a1, a2) = assets();
        let a1 = a1.with_phi(0.0).unwrap();
        let pop = FactorPopulation::new(50, 45, 5).unwrap();
        let result = factor_price_paths(&a1, &a2, &pop, T).unwrap();
        assert!(result.equilibrium_1.iter().all(|&b| b));
        assert!(result.equilibrium_2.iter().all(|&b| b));
        assert!(result.path_2.average_rd().abs() < 1e-12);
    }

    #[test]
    fn check_equilibrium_conditions_truth_table() {
        let uneven = FactorPopulation::new(50, 45, 5).unwrap();
        let even = FactorPopulation::new(50, 25, 25).unwrap();
        let flags = check_equilibrium_conditions(&uneven, 0.5, 0.5);
        assert_eq!((flags.asset1, flags.asset2), (true, true));
        let flags = check_equilibrium_conditions(&even, 0.4, 0.5);
        assert_eq!((flags.asset1, flags.asset2), (false, true));
        let flags = check_equilibrium_conditions(&uneven, 0.4, 0.5);
        assert_eq!((flags.asset1, flags.asset2), (false, false));
        let flags = check_equilibrium_conditions(&even, 0.4, 0.4);
        assert_eq!((flags.asset1, flags.asset2), (false, false));
    }

    #[test]
    fn misvaluation_signs_follow_the_factor_split() {
        // Frozen from the recursion: J_D > J_MN undervalues asset 2,
        // J_D < J_MN overvalues it, and asset 1 is untouched by the split.
        let (a1, a2) = assets();
        let heavy_d = FactorPopulation::new(50, 45, 5).unwrap();
        let heavy_mn = FactorPopulation::new(50, 5, 45).unwrap();
        let r1 = factor_price_paths(&a1, &a2, &heavy_d, T).unwrap();
        let r2 = factor_price_paths(&a1, &a2, &heavy_mn, T).unwrap();
        assert!((r1.path_2.average_rd() - (-0.152665083655967)).abs() < 1e-9);
        assert!((r2.path_2.average_rd() - 0.17587055375455).abs() < 1e-9);
        assert!((r1.path_1.average_rd() - 0.489750070542579).abs() < 1e-9);
    }

    #[test]
    fn asset1_path_is_bit_identical_across_splits() {
        let (a1, a2) = assets();
        let splits = [(50, 45, 5), (50, 5, 45), (80, 10, 10), (2, 49, 49)];
        let reference = factor_price_paths(
            &a1,
            &a2,
            &FactorPopulation::new(50, 25, 25).unwrap(),
            T,
        )
        .unwrap();
        for (n, d, mn) in splits {
            let pop = FactorPopulation::new(n, d, mn).unwrap();
            let result = factor_price_paths(&a1, &a2, &pop, T).unwrap();
            for (a, b) in result
                .path_1
                .records()
                .iter()
                .zip(reference.path_1.records())
            {
                assert_eq!(a.price.to_bits(), b.price.to_bits());
                assert_eq!(a.bid.to_bits(), b.bid.to_bits());
                assert_eq!(a.ask.to_bits(), b.ask.to_bits());
            }
        }
    }

    #[test]
    fn surface_invariants() {
        let (a1, a2) = assets();
        let grid = FactorGrid {
            pi1: vec![0.35, 0.4, 0.45, 0.5],
            j_market_neutral: vec![5, 15, 25, 35, 45],
            j_noise: 50,
            total: 100,
        };
        let cells = factor_rd_surface(&a1, &a2, &grid, T);
        assert_eq!(cells.len(), 20);

        for cell in &cells {
            let (rd1, rd2) = cell.outcome.clone().unwrap();
            if cell.j_market_neutral == 25 {
                assert!(rd2.abs() < 1e-12, "J_D = J_MN zeroes RD_2");
            }
            if cell.pi1 == 0.5 {
                assert!(rd2.abs() < 1e-12, "pi_1 = 0.5 zeroes RD_2");
            }
            let _ = rd1;
        }

        // Along a fixed pi_1 row, RD_1 is invariant to the factor split.
        for chunk in cells.chunks(5) {
            let rd1s: Vec<f64> = chunk
                .iter()
                .map(|c| c.outcome.clone().unwrap().0)
                .collect();
            assert!(rd1s.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn surface_flags_infeasible_cells() {
        let (a1, a2) = assets();
        let grid = FactorGrid {
            pi1: vec![0.4],
            j_market_neutral: vec![25, 60], // 60 > total - j_noise = 50
            j_noise: 50,
            total: 100,
        };
        let cells = factor_rd_surface(&a1, &a2, &grid, T);
        assert!(cells[0].outcome.is_ok());
        assert!(cells[1].outcome.is_err());
    }

    #[test]
    fn swapping_factor_counts_inverts_the_imbalance_ratio() {
        let (a1, a2) = assets();
        let pop_a = FactorPopulation::new(50, 45, 5).unwrap();
        let pop_b = FactorPopulation::new(50, 5, 45).unwrap();
        let ra = factor_price_paths_const_pi1(&a1, &a2, &pop_a, 0.4, T).unwrap();
        let rb = factor_price_paths_const_pi1(&a1, &a2, &pop_b, 0.4, T).unwrap();
        for (x, y) in ra.path_2.records().iter().zip(rb.path_2.records()) {
            let ratio_a = x.imbalance + 1.0;
            let ratio_b = y.imbalance + 1.0;
            assert!((ratio_a * ratio_b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonzero_phi_on_asset2() {
        let (a1, _) = assets();
        let bad = AssetSpec::new(vec![-0.2, -0.1, 0.0, 0.1, 0.2], 2.80, 2.0, 0.85, 0.01).unwrap();
        let pop = FactorPopulation::new(50, 25, 25).unwrap();
        let err = factor_price_paths(&a1, &bad, &pop, T).unwrap_err();
        assert!(matches!(err, EngineError::AssumptionViolated { .. }));
    }

    #[test]
    fn empty_population_is_degenerate() {
        assert!(matches!(
            FactorPopulation::new(0, 0, 0),
            Err(EngineError::DegenerateMarket(_))
        ));
    }
}
