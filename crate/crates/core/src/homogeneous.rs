//! Single-asset average and equilibrium price dynamics for a market of
//! homogeneous noise traders.
//!
//! Each period the average quote is q_t = (1-alpha) kappa FV_t / 2 +
//! alpha p_{t-1}; the prevailing bid and ask are pi/(1-pi) q_t and
//! (1-pi)/pi q_t, and the average price is q_t + (pi/(1-pi) - 1). The
//! market clears (bid = ask = q_t) exactly when pi_t = 1/2; none of this
//! depends on the trader count, so the API has no N parameter.

use rayon::prelude::*;

use crate::error::EngineError;
use crate::market::{
    buyer_probability, fv_unchecked, noise_quote_mean, AssetSpec, PeriodRecord, PricePath,
};

/// Result of one homogeneous-market run.
#[derive(Debug, Clone)]
pub struct HomogeneousResult {
    pub path: PricePath,
    /// Per-period market-clearing flag: true iff pi_t = 1/2.
    pub in_equilibrium: Vec<bool>,
    /// Echo of the parameters that produced the path.
    pub asset: AssetSpec,
}

/// True iff the market clears in period t, i.e. the buyer probability is
/// exactly one half.
pub fn equilibrium_exists(phi: f64, t: u32) -> bool {
    buyer_probability(phi, t) == 0.5
}

/// Iterates the average-price recursion over the full horizon, starting the
/// anchor at the period-1 fundamental value.
///
/// The recursion feeds the average price p_{t-1} (quote plus imbalance)
/// into the next quote, the previous period mean traded price.
pub fn average_price_path(asset: &AssetSpec, horizon: u32) -> Result<HomogeneousResult, EngineError> {
    asset.validate_for_horizon(horizon)?;

    let mut records = Vec::with_capacity(horizon as usize);
    let mut in_equilibrium = Vec::with_capacity(horizon as usize);
    let mut prev_price = fv_unchecked(asset, 1, horizon);

    for t in 1..=horizon {
        let fv = fv_unchecked(asset, t, horizon);
        let quote = noise_quote_mean(asset, fv, prev_price);
        let pi = buyer_probability(asset.phi(), t);
        if pi <= 0.0 || pi >= 1.0 {
            return Err(EngineError::DegenerateMarket(format!(
                "buyer probability pi_{t} = {pi}; prevailing prices require 0 < pi < 1"
            )));
        }
        let imbalance = pi / (1.0 - pi) - 1.0;
        let price = quote + imbalance;
        let bid = pi / (1.0 - pi) * quote;
        let ask = (1.0 - pi) / pi * quote;
        records.push(PeriodRecord {
            t,
            fv,
            price,
            bid,
            ask,
            imbalance,
            rd: 0.0,
            event: None,
        });
        in_equilibrium.push(pi == 0.5);
        prev_price = price;
    }

    let path = PricePath::new(records)?;
    Ok(HomogeneousResult {
        path,
        in_equilibrium,
        asset: asset.clone(),
    })
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------

/// Axis values for an RD sweep over (kappa, alpha, phi).
#[derive(Debug, Clone)]
pub struct RdGrid {
    pub kappa: Vec<f64>,
    pub alpha: Vec<f64>,
    pub phi: Vec<f64>,
}

/// One sweep cell; `rd` carries the per-cell failure instead of aborting
/// the sweep.
#[derive(Debug, Clone)]
pub struct RdCell {
    pub kappa: f64,
    pub alpha: f64,
    pub phi: f64,
    pub rd: Result<f64, EngineError>,
}

/// Average RD over every (kappa, alpha, phi) grid point, row-major with
/// kappa outermost and phi innermost. Cells that fail (e.g. phi outside
/// the weak-foresight bound) are flagged, never dropped.
pub fn sweep_rd(base: &AssetSpec, grid: &RdGrid, horizon: u32) -> Vec<RdCell> {
    let mut points = Vec::with_capacity(grid.kappa.len() * grid.alpha.len() * grid.phi.len());
    for &kappa in &grid.kappa {
        for &alpha in &grid.alpha {
            for &phi in &grid.phi {
                points.push((kappa, alpha, phi));
            }
        }
    }
    // Cells run in parallel; collect keeps the grid order regardless of
    // scheduling.
    points
        .into_par_iter()
        .map(|(kappa, alpha, phi)| RdCell {
            kappa,
            alpha,
            phi,
            rd: sweep_cell(base, kappa, alpha, phi, horizon),
        })
        .collect()
}

fn sweep_cell(
    base: &AssetSpec,
    kappa: f64,
    alpha: f64,
    phi: f64,
    horizon: u32,
) -> Result<f64, EngineError> {
    let asset = base.with_kappa(kappa)?.with_alpha(alpha)?.with_phi(phi)?;
    Ok(average_price_path(&asset, horizon)?.path.average_rd())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::fundamental_value;

    const T: u32 = 15;

    fn asset(kappa: f64, alpha: f64, phi: f64) -> AssetSpec {
        AssetSpec::reference_speculative(kappa, alpha, phi).unwrap()
    }

    #[test]
    fn equilibrium_path_reference_values() {
        // kappa=4, alpha=0.85, phi=0: frozen from the recursion evaluated
        // independently.
        let result = average_price_path(&asset(4.0, 0.85, 0.0), T).unwrap();
        let p = result.path.prices();
        assert!((p[0] - 4.14).abs() < 1e-12);
        assert!((p[1] - 4.563).abs() < 1e-12);
        assert!((p[14] - 4.74575806067349).abs() < 1e-9);
        assert!((result.path.average_rd() - 0.843173212307171).abs() < 1e-9);
        assert!(result.in_equilibrium.iter().all(|&b| b));
    }

    #[test]
    fn equilibrium_identity_is_exact() {
        // pi = 0.5 collapses bid, ask, quote and price to the same value.
        let result = average_price_path(&asset(4.0, 0.85, 0.0), T).unwrap();
        for r in result.path.records() {
            assert_eq!(r.bid, r.price);
            assert_eq!(r.ask, r.price);
            assert_eq!(r.imbalance, 0.0);
        }
    }

    #[test]
    fn start_anchor_identity() {
        // p_1 = FV_1 [(1-alpha) kappa/2 + alpha] + (pi_1/(1-pi_1) - 1).
        for (kappa, alpha, phi) in [(4.0, 0.85, 0.0), (3.0, 0.6, 0.01), (5.0, 0.95, 0.02)] {
            let a = asset(kappa, alpha, phi);
            let fv1 = fundamental_value(&a, 1, T).unwrap();
            let pi1 = buyer_probability(phi, 1);
            let expected = fv1 * ((1.0 - alpha) * kappa / 2.0 + alpha) + (pi1 / (1.0 - pi1) - 1.0);
            let p1 = average_price_path(&a, T).unwrap().path.prices()[0];
            assert!((p1 - expected).abs() < 1e-12, "kappa={kappa} alpha={alpha}");
        }
    }

    #[test]
    fn hump_shape_without_weak_foresight() {
        let result = average_price_path(&asset(4.0, 0.85, 0.0), T).unwrap();
        let p = result.path.prices();
        let (argmax, _) = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!(argmax > 0 && argmax < p.len() - 1, "interior maximum");
        // No crash: terminal price stays above the terminal fundamental.
        let fv_t = fundamental_value(&asset(4.0, 0.85, 0.0), T, T).unwrap();
        assert!(p[14] > fv_t);
    }

    #[test]
    fn weak_foresight_pulls_terminal_price_down() {
        // phi = 0.01: frozen terminal value from the recursion. The price
        // declines sharply from its interior peak but still ends 0.71
        // above FV_15.
        let result = average_price_path(&asset(4.0, 0.85, 0.01), T).unwrap();
        let p = result.path.prices();
        assert!((p[0] - 4.10078431372549).abs() < 1e-9);
        assert!((p[14] - 2.63020016238414).abs() < 1e-9);
        assert!((result.path.average_rd() - 0.489750070542579).abs() < 1e-9);
        assert!(result.in_equilibrium.iter().all(|&b| !b));

        let peak = p.iter().cloned().fold(f64::MIN, f64::max);
        assert!(peak - p[14] > 2.0, "sharp end-of-session decline");
    }

    #[test]
    fn constant_fv_with_kappa_two_is_a_fixed_point() {
        let a = AssetSpec::reference_value(2.0, 0.85).unwrap();
        let result = average_price_path(&a, T).unwrap();
        for r in result.path.records() {
            assert!((r.price - 2.80).abs() < 1e-12);
        }
        assert!(result.path.average_rd().abs() < 1e-12);
    }

    #[test]
    fn imbalance_sign_matches_excess_supply() {
        let result = average_price_path(&asset(4.0, 0.85, 0.01), T).unwrap();
        for r in result.path.records() {
            let quote = r.price - r.imbalance;
            assert!(r.imbalance < 0.0);
            assert!(r.price < quote);
        }
    }

    #[test]
    fn equilibrium_exists_truth_table() {
        assert!(equilibrium_exists(0.0, 1));
        assert!(equilibrium_exists(0.0, 15));
        assert!(!equilibrium_exists(0.01, 1));
        assert!(equilibrium_exists(0.01, 0));
    }

    #[test]
    fn degenerate_probability_is_reported() {
        // Bypass AssetSpec's horizon validation by running a longer horizon
        // than the phi bound allows.
        let a = asset(4.0, 0.85, 0.03);
        let err = average_price_path(&a, 20).unwrap_err();
        assert!(matches!(err, EngineError::InvalidParameter(_)));
    }

    #[test]
    fn sweep_rd_monotone_in_phi_and_kappa() {
        let base = asset(4.0, 0.85, 0.0);
        let grid = RdGrid {
            kappa: vec![4.0],
            alpha: vec![0.85],
            phi: vec![0.0, 0.005, 0.01],
        };
        let cells = sweep_rd(&base, &grid, T);
        let rds: Vec<f64> = cells.iter().map(|c| *c.rd.as_ref().unwrap()).collect();
        assert!(rds[0] > rds[1] && rds[1] > rds[2], "RD decreasing in phi");

        let grid = RdGrid {
            kappa: vec![3.0, 4.0, 5.0],
            alpha: vec![0.85],
            phi: vec![0.0],
        };
        let cells = sweep_rd(&base, &grid, T);
        let rds: Vec<f64> = cells.iter().map(|c| *c.rd.as_ref().unwrap()).collect();
        assert!(rds[0] < rds[1] && rds[1] < rds[2], "RD increasing in kappa");
    }

    #[test]
    fn sweep_flags_bad_cells_and_continues() {
        let base = asset(4.0, 0.85, 0.0);
        let grid = RdGrid {
            kappa: vec![4.0],
            alpha: vec![0.85],
            phi: vec![0.0, 0.2], // 0.2 >= 0.5/15 violates the bound
        };
        let cells = sweep_rd(&base, &grid, T);
        assert_eq!(cells.len(), 2);
        assert!(cells[0].rd.is_ok());
        assert!(cells[1].rd.is_err());
    }

    #[test]
    fn sweep_zero_dividend_kappa_two_yields_zero_rd_cells() {
        let base = AssetSpec::reference_value(2.0, 0.85).unwrap();
        let grid = RdGrid {
            kappa: vec![2.0],
            alpha: vec![0.3, 0.85],
            phi: vec![0.0],
        };
        for cell in sweep_rd(&base, &grid, T) {
            assert!(cell.rd.unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_is_row_major() {
        let base = asset(4.0, 0.85, 0.0);
        let grid = RdGrid {
            kappa: vec![3.0, 4.0],
            alpha: vec![0.75, 0.85],
            phi: vec![0.0, 0.005],
        };
        let cells = sweep_rd(&base, &grid, T);
        assert_eq!(cells.len(), 8);
        assert_eq!((cells[0].kappa, cells[0].alpha, cells[0].phi), (3.0, 0.75, 0.0));
        assert_eq!((cells[1].kappa, cells[1].alpha, cells[1].phi), (3.0, 0.75, 0.005));
        assert_eq!((cells[2].kappa, cells[2].alpha, cells[2].phi), (3.0, 0.85, 0.0));
        assert_eq!((cells[7].kappa, cells[7].alpha, cells[7].phi), (4.0, 0.85, 0.005));
    }
}
