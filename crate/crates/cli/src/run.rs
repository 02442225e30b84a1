//! Experiment dispatch: expands sweep grids, calls the analytic engines or
//! the Monte Carlo oracle, and serializes result tables.
//!
//! Table schemas (fixed column order per model):
//! - homogeneous: run_id,t,fv_1,price_1,bid_1,ask_1,rd_1,imbalance_1,
//!   kappa,alpha,phi
//! - factor_two_asset: run_id,t,fv_1,price_1,bid_1,ask_1,rd_1,imbalance_1,
//!   fv_2,price_2,bid_2,ask_2,rd_2,imbalance_2,pi_1,j_noise,j_directional,
//!   j_market_neutral
//! - hetero_single: run_id,t,fv_1,price_1,bid_1,ask_1,rd_1,event,imbalance,
//!   cum_imbalance,q_noise,q_fund,q_spec,j_noise,j_fund,j_spec,alpha_f,
//!   gamma1,gamma2
//! - hetero_two_asset: run_id,t,fv_1,price_1,bid_1,ask_1,rd_1,event_1,
//!   imbalance_1,cum_imbalance_1,fv_2,price_2,bid_2,ask_2,rd_2,event_2,
//!   imbalance_2,cum_imbalance_2,j_noise,j_fund,j_spec,gamma2_1,kappa_2,
//!   gamma2_2,asset2_mode
//! - monte_carlo: run_id,t per asset block fv_i,mc_price_i,se_price_i,
//!   mc_bid_i,se_bid_i,mc_ask_i,se_ask_i,mc_quote_i,buyer_fraction_i,
//!   se_buyer_fraction_i,excluded_i, then sessions,seed
//!
//! Sweep runs additionally write `<stem>_grid.<ext>` with one row per cell:
//! the swept axis values, rd_1 (and rd_2 for two-asset models) and a flag
//! column carrying the cell's failure, if any.

use std::path::{Path, PathBuf};

use bubblelab::error::EngineError;
use bubblelab::factor::{self, FactorPopulation, TwoAssetResult};
use bubblelab::hetero::{self, HeteroPopulation, HeteroResult};
use bubblelab::homogeneous::{self, HomogeneousResult};
use bubblelab::mc::{self, Population, SimulationConfig};

use crate::config::{Experiment, Model, SweepAxis};
use crate::table::{Field, TableBuilder};

/// A written output file.
#[derive(Debug)]
pub struct WrittenFile {
    pub path: PathBuf,
    pub bytes: usize,
}

#[derive(Debug)]
pub enum RunError {
    /// Engine rejected the inputs; counts as a validation failure.
    Invalid(EngineError),
    /// The market degenerated at run time.
    Degenerate(EngineError),
    Io(std::io::Error),
}

impl From<EngineError> for RunError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::DegenerateMarket(_) => RunError::Degenerate(e),
            other => RunError::Invalid(other),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// One point of the expanded sweep grid (empty for plain runs).
#[derive(Debug, Clone, Default)]
struct Cell {
    values: Vec<(SweepAxis, f64)>,
}

impl Cell {
    fn get(&self, axis: SweepAxis) -> Option<f64> {
        self.values
            .iter()
            .find(|(a, _)| *a == axis)
            .map(|(_, v)| *v)
    }
}

fn expand_grid(sweep: &[(SweepAxis, Vec<f64>)]) -> Vec<Cell> {
    let mut cells = vec![Cell::default()];
    for (axis, values) in sweep {
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for cell in &cells {
            for &value in values {
                let mut c = cell.clone();
                c.values.push((*axis, value));
                next.push(c);
            }
        }
        cells = next;
    }
    cells
}

/// Runs the experiment and writes its output file(s), honoring optional
/// output-path and Monte Carlo overrides.
pub fn execute(
    exp: &Experiment,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
    sessions_override: Option<u32>,
) -> Result<Vec<WrittenFile>, RunError> {
    let out_path = out_override.unwrap_or(&exp.output.path).to_path_buf();
    let format = exp.output.format;
    let cells = expand_grid(&exp.sweep);
    let swept = !exp.sweep.is_empty();

    let mut table: Option<TableBuilder> = None;
    let mut grid: Option<TableBuilder> = None;
    if swept {
        let mut header: Vec<&str> = exp.sweep.iter().map(|(a, _)| a.key()).collect();
        header.push("rd_1");
        if matches!(exp.model, Model::FactorTwoAsset | Model::HeteroTwoAsset) {
            header.push("rd_2");
        }
        header.push("flag");
        grid = Some(TableBuilder::new(format, &header));
    }

    for (run_id, cell) in cells.iter().enumerate() {
        let outcome = run_cell(exp, cell, run_id as u64, seed_override, sessions_override);
        match outcome {
            Ok(CellOutput { rows, header, rds }) => {
                let builder = table.get_or_insert_with(|| TableBuilder::new(format, &header_refs(&header)));
                for row in rows {
                    builder.row(&row);
                }
                if let Some(grid) = grid.as_mut() {
                    let mut fields: Vec<Field> = cell
                        .values
                        .iter()
                        .map(|(_, v)| Field::Num(*v))
                        .collect();
                    fields.push(Field::Num(rds.0));
                    if let Some(rd2) = rds.1 {
                        fields.push(Field::Num(rd2));
                    } else if matches!(exp.model, Model::FactorTwoAsset | Model::HeteroTwoAsset) {
                        fields.push(Field::Empty);
                    }
                    fields.push(Field::Empty);
                    grid.row(&fields);
                }
            }
            Err(e) if swept => {
                // Flagged cell: keep sweeping, record the failure in the grid.
                let message = match &e {
                    RunError::Invalid(err) | RunError::Degenerate(err) => err.to_string(),
                    RunError::Io(err) => return Err(RunError::Io(std::io::Error::new(err.kind(), err.to_string()))),
                };
                let grid = grid.as_mut().expect("grid exists for sweeps");
                let mut fields: Vec<Field> = cell
                    .values
                    .iter()
                    .map(|(_, v)| Field::Num(*v))
                    .collect();
                fields.push(Field::Empty);
                if matches!(exp.model, Model::FactorTwoAsset | Model::HeteroTwoAsset) {
                    fields.push(Field::Empty);
                }
                fields.push(Field::text(message));
                grid.row(&fields);
            }
            Err(e) => return Err(e),
        }
    }

    let mut written = Vec::new();
    if let Some(builder) = table {
        let bytes = builder.finish();
        std::fs::write(&out_path, &bytes)?;
        written.push(WrittenFile {
            path: out_path.clone(),
            bytes: bytes.len(),
        });
    }
    if let Some(builder) = grid {
        let grid_path = grid_path(&out_path);
        let bytes = builder.finish();
        std::fs::write(&grid_path, &bytes)?;
        written.push(WrittenFile {
            path: grid_path,
            bytes: bytes.len(),
        });
    }
    Ok(written)
}

fn grid_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "out".to_string());
    let ext = out
        .extension()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "csv".to_string());
    out.with_file_name(format!("{stem}_grid.{ext}"))
}

fn header_refs(header: &[&'static str]) -> Vec<&'static str> {
    header.to_vec()
}

struct CellOutput {
    header: Vec<&'static str>,
    rows: Vec<Vec<Field>>,
    /// (rd_1, rd_2) for the sweep grid.
    rds: (f64, Option<f64>),
}

fn run_cell(
    exp: &Experiment,
    cell: &Cell,
    run_id: u64,
    seed_override: Option<u64>,
    sessions_override: Option<u32>,
) -> Result<CellOutput, RunError> {
    match exp.model {
        Model::Homogeneous => homogeneous_cell(exp, cell, run_id),
        Model::FactorTwoAsset => factor_cell(exp, cell, run_id),
        Model::HeteroSingle => hetero_single_cell(exp, run_id),
        Model::HeteroTwoAsset => hetero_two_asset_cell(exp, cell, run_id),
        Model::MonteCarlo => monte_carlo_cell(exp, run_id, seed_override, sessions_override),
    }
}

fn homogeneous_cell(exp: &Experiment, cell: &Cell, run_id: u64) -> Result<CellOutput, RunError> {
    let base = &exp.market.assets()[0];
    let mut asset = base.clone();
    if let Some(kappa) = cell.get(SweepAxis::Kappa) {
        asset = asset.with_kappa(kappa)?;
    }
    if let Some(alpha) = cell.get(SweepAxis::Alpha) {
        asset = asset.with_alpha(alpha)?;
    }
    if let Some(phi) = cell.get(SweepAxis::Phi) {
        asset = asset.with_phi(phi)?;
    }
    let HomogeneousResult { path, .. } = homogeneous::average_price_path(&asset, exp.market.periods())?;

    let header = vec![
        "run_id", "t", "fv_1", "price_1", "bid_1", "ask_1", "rd_1", "imbalance_1", "kappa",
        "alpha", "phi",
    ];
    let rows = path
        .records()
        .iter()
        .map(|r| {
            vec![
                Field::Int(run_id),
                Field::Int(r.t as u64),
                Field::Num(r.fv),
                Field::Num(r.price),
                Field::Num(r.bid),
                Field::Num(r.ask),
                Field::Num(r.rd),
                Field::Num(r.imbalance),
                Field::Num(asset.kappa()),
                Field::Num(asset.alpha()),
                Field::Num(asset.phi()),
            ]
        })
        .collect();
    Ok(CellOutput {
        header,
        rows,
        rds: (path.average_rd(), None),
    })
}

fn factor_population(exp: &Experiment) -> FactorPopulation {
    match exp.population.as_ref().expect("validated") {
        Population::Factor(p) => *p,
        Population::Hetero(_) => unreachable!("validated population kind"),
    }
}

fn hetero_population(exp: &Experiment) -> HeteroPopulation {
    match exp.population.as_ref().expect("validated") {
        Population::Hetero(p) => *p,
        Population::Factor(_) => unreachable!("validated population kind"),
    }
}

fn factor_cell(exp: &Experiment, cell: &Cell, run_id: u64) -> Result<CellOutput, RunError> {
    let asset1 = &exp.market.assets()[0];
    let asset2 = &exp.market.assets()[1];
    let base = factor_population(exp);

    let pop = match cell.get(SweepAxis::JMarketNeutral) {
        None => base,
        Some(j_mn) => {
            let j_mn = j_mn as u32;
            let non_noise = base.j_directional + base.j_market_neutral;
            let j_d = non_noise.checked_sub(j_mn).ok_or_else(|| {
                EngineError::InvalidParameter(format!(
                    "infeasible cell: j_mn = {j_mn} exceeds the non-noise population {non_noise}"
                ))
            })?;
            FactorPopulation::new(base.j_noise, j_d, j_mn)?
        }
    };

    let pi1_const = cell.get(SweepAxis::Pi1);
    let result: TwoAssetResult = match pi1_const {
        Some(pi1) => factor::factor_price_paths_const_pi1(asset1, asset2, &pop, pi1, exp.market.periods())?,
        None => factor::factor_price_paths(asset1, asset2, &pop, exp.market.periods())?,
    };

    let header = vec![
        "run_id",
        "t",
        "fv_1",
        "price_1",
        "bid_1",
        "ask_1",
        "rd_1",
        "imbalance_1",
        "fv_2",
        "price_2",
        "bid_2",
        "ask_2",
        "rd_2",
        "imbalance_2",
        "pi_1",
        "j_noise",
        "j_directional",
        "j_market_neutral",
    ];
    let rows = result
        .path_1
        .records()
        .iter()
        .zip(result.path_2.records())
        .map(|(r1, r2)| {
            let pi1 = pi1_const
                .unwrap_or_else(|| bubblelab::market::buyer_probability(asset1.phi(), r1.t));
            vec![
                Field::Int(run_id),
                Field::Int(r1.t as u64),
                Field::Num(r1.fv),
                Field::Num(r1.price),
                Field::Num(r1.bid),
                Field::Num(r1.ask),
                Field::Num(r1.rd),
                Field::Num(r1.imbalance),
                Field::Num(r2.fv),
                Field::Num(r2.price),
                Field::Num(r2.bid),
                Field::Num(r2.ask),
                Field::Num(r2.rd),
                Field::Num(r2.imbalance),
                Field::Num(pi1),
                Field::Int(pop.j_noise as u64),
                Field::Int(pop.j_directional as u64),
                Field::Int(pop.j_market_neutral as u64),
            ]
        })
        .collect();
    Ok(CellOutput {
        header,
        rows,
        rds: (
            result.path_1.average_rd(),
            Some(result.path_2.average_rd()),
        ),
    })
}

fn hetero_single_cell(exp: &Experiment, run_id: u64) -> Result<CellOutput, RunError> {
    let asset = &exp.market.assets()[0];
    let pop = hetero_population(exp);
    let params = exp.strategy.expect("validated");
    let HeteroResult { path, records } =
        hetero::hetero_price_path(asset, &pop, &params, exp.market.periods())?;

    let header = vec![
        "run_id",
        "t",
        "fv_1",
        "price_1",
        "bid_1",
        "ask_1",
        "rd_1",
        "event",
        "imbalance",
        "cum_imbalance",
        "q_noise",
        "q_fund",
        "q_spec",
        "j_noise",
        "j_fund",
        "j_spec",
        "alpha_f",
        "gamma1",
        "gamma2",
    ];
    let rows = path
        .records()
        .iter()
        .zip(&records)
        .map(|(r, h)| {
            vec![
                Field::Int(run_id),
                Field::Int(r.t as u64),
                Field::Num(r.fv),
                Field::Num(r.price),
                Field::Num(r.bid),
                Field::Num(r.ask),
                Field::Num(r.rd),
                Field::text(h.event.to_string()),
                Field::Num(h.imbalance),
                Field::Num(h.cumulative_imbalance),
                Field::Num(h.q_noise),
                Field::Num(h.q_fund),
                Field::Num(h.q_spec),
                Field::Int(pop.j_noise as u64),
                Field::Int(pop.j_fund as u64),
                Field::Int(pop.j_spec as u64),
                Field::Num(params.alpha_f),
                Field::Num(params.gamma1),
                Field::Num(params.gamma2),
            ]
        })
        .collect();
    Ok(CellOutput {
        header,
        rows,
        rds: (path.average_rd(), None),
    })
}

fn hetero_two_asset_cell(exp: &Experiment, cell: &Cell, run_id: u64) -> Result<CellOutput, RunError> {
    let asset1 = &exp.market.assets()[0];
    let mut asset2 = exp.market.assets()[1].clone();
    let base = hetero_population(exp);
    let params1 = exp.strategy.expect("validated");
    let mut params2 = exp.strategy2.expect("validated");
    let mode = exp.asset2_mode.expect("validated");

    let pop = match cell.get(SweepAxis::JNoise) {
        None => base,
        Some(j_n) => {
            let j_n = j_n as u32;
            let total = base.total();
            let rest = total.checked_sub(j_n).ok_or_else(|| {
                EngineError::InvalidParameter(format!(
                    "infeasible cell: j_n = {j_n} exceeds the total population {total}"
                ))
            })?;
            if rest % 2 != 0 {
                return Err(EngineError::InvalidParameter(format!(
                    "infeasible cell: j_fund = j_spec = (N - j_n)/2 is not integral for j_n = {j_n}"
                ))
                .into());
            }
            HeteroPopulation::new(j_n, rest / 2, rest / 2)?
        }
    };
    if let Some(kappa2) = cell.get(SweepAxis::Kappa2) {
        asset2 = asset2.with_kappa(kappa2)?;
    }
    if let Some(gamma22) = cell.get(SweepAxis::Gamma22) {
        params2 = params2.with_gamma2(gamma22)?;
    }

    let result = hetero::two_asset_hetero_paths(
        asset1,
        &asset2,
        &pop,
        &params1,
        &params2,
        mode,
        exp.market.periods(),
    )?;

    let header = vec![
        "run_id",
        "t",
        "fv_1",
        "price_1",
        "bid_1",
        "ask_1",
        "rd_1",
        "event_1",
        "imbalance_1",
        "cum_imbalance_1",
        "fv_2",
        "price_2",
        "bid_2",
        "ask_2",
        "rd_2",
        "event_2",
        "imbalance_2",
        "cum_imbalance_2",
        "j_noise",
        "j_fund",
        "j_spec",
        "gamma2_1",
        "kappa_2",
        "gamma2_2",
        "asset2_mode",
    ];
    let rows = result
        .records_1
        .iter()
        .zip(&result.records_2)
        .zip(result.path_1.records().iter().zip(result.path_2.records()))
        .map(|((h1, h2), (r1, r2))| {
            vec![
                Field::Int(run_id),
                Field::Int(r1.t as u64),
                Field::Num(r1.fv),
                Field::Num(r1.price),
                Field::Num(r1.bid),
                Field::Num(r1.ask),
                Field::Num(r1.rd),
                Field::text(h1.event.to_string()),
                Field::Num(h1.imbalance),
                Field::Num(h1.cumulative_imbalance),
                Field::Num(r2.fv),
                Field::Num(r2.price),
                Field::Num(r2.bid),
                Field::Num(r2.ask),
                Field::Num(r2.rd),
                Field::text(h2.event.to_string()),
                Field::Num(h2.imbalance),
                Field::Num(h2.cumulative_imbalance),
                Field::Int(pop.j_noise as u64),
                Field::Int(pop.j_fund as u64),
                Field::Int(pop.j_spec as u64),
                Field::Num(params1.gamma2),
                Field::Num(asset2.kappa()),
                Field::Num(params2.gamma2),
                Field::text(mode.to_string()),
            ]
        })
        .collect();
    Ok(CellOutput {
        header,
        rows,
        rds: (
            result.path_1.average_rd(),
            Some(result.path_2.average_rd()),
        ),
    })
}

fn monte_carlo_cell(
    exp: &Experiment,
    run_id: u64,
    seed_override: Option<u64>,
    sessions_override: Option<u32>,
) -> Result<CellOutput, RunError> {
    let config = SimulationConfig {
        sessions: sessions_override.unwrap_or(exp.sessions),
        seed: seed_override.unwrap_or(exp.seed),
        population: exp.population.clone().expect("validated"),
        market: exp.market.clone(),
        clearing: mc::Clearing::Batch,
        strategy: exp.strategy,
    };
    let aggregate = mc::run_sessions(&config)?;

    let two_assets = exp.market.assets().len() == 2;
    let mut header = vec!["run_id", "t"];
    header.extend_from_slice(&[
        "fv_1",
        "mc_price_1",
        "se_price_1",
        "mc_bid_1",
        "se_bid_1",
        "mc_ask_1",
        "se_ask_1",
        "mc_quote_1",
        "buyer_fraction_1",
        "se_buyer_fraction_1",
        "excluded_1",
    ]);
    if two_assets {
        header.extend_from_slice(&[
            "fv_2",
            "mc_price_2",
            "se_price_2",
            "mc_bid_2",
            "se_bid_2",
            "mc_ask_2",
            "se_ask_2",
            "mc_quote_2",
            "buyer_fraction_2",
            "se_buyer_fraction_2",
            "excluded_2",
        ]);
    }
    header.extend_from_slice(&["sessions", "seed"]);

    let horizon = exp.market.periods() as usize;
    let mut rows = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut row = vec![Field::Int(run_id), Field::Int(t as u64 + 1)];
        for (i, asset_agg) in aggregate.per_asset.iter().enumerate() {
            let stats = &asset_agg.periods[t];
            let fv = bubblelab::market::fundamental_value(
                &exp.market.assets()[i],
                t as u32 + 1,
                exp.market.periods(),
            )
            .expect("period in range");
            row.extend([
                Field::Num(fv),
                Field::Num(stats.mean_price),
                Field::Num(stats.se_price),
                Field::Num(stats.mean_bid),
                Field::Num(stats.se_bid),
                Field::Num(stats.mean_ask),
                Field::Num(stats.se_ask),
                Field::Num(stats.mean_quote),
                Field::Num(stats.buyer_fraction),
                Field::Num(stats.se_buyer_fraction),
                Field::Int(stats.excluded_sessions as u64),
            ]);
        }
        row.extend([Field::Int(config.sessions as u64), Field::Int(config.seed)]);
        rows.push(row);
    }

    Ok(CellOutput {
        header,
        rows,
        rds: (f64::NAN, None),
    })
}
