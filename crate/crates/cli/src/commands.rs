use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use permit_sim::adoption::{run_adoption, AdoptionTrajectory};
use permit_sim::market::{clear_market_expected, MarketOutcome};
use permit_sim::risk::{empirical_cdf_pdf, risk, risk_report, EmpiricalSample, Measure, RiskConvention, STANDARD_LEVELS};
use permit_sim::simulator::{monte_carlo, EnsembleResult};
use permit_sim::{ModelParams, Tech, TechnologyVector};
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::output::{num, opt_num, opt_period, sha256_hex, OutputDir, RunManifest};

pub fn config_hash(params: &ModelParams) -> Result<String, CliError> {
    Ok(sha256_hex(&serde_json::to_vec(params)?))
}

fn tech_label(t: Tech) -> &'static str {
    match t {
        Tech::Old => "old",
        Tech::New => "new",
    }
}

fn support_label(pg: f64) -> String {
    format!("pg_{}", num(pg))
}

/// Adoption trajectories without and with the price support, plus an optional sweep.
pub fn adopt(params: &ModelParams, sweep: &[f64], out_dir: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let mut out = OutputDir::create(out_dir)?;
    let horizon = params.horizon();
    let without = run_adoption(&params.with_price_support(0.0))?;
    let with = run_adoption(params)?;

    for (label, tr) in [("no_ec4p", &without), ("ec4p", &with)] {
        let rows = (0..horizon).flat_map(|t| {
            (0..params.firm_count()).map(move |i| {
                vec![
                    t.to_string(),
                    i.to_string(),
                    tech_label(tr.tech_at(i, t)).to_string(),
                    opt_period(tr.adoption[i]),
                ]
            })
        });
        out.csv(
            &format!("trajectory_{label}.csv"),
            &["period", "firm", "technology", "adoption_period"],
            rows,
        )?;
    }

    let (a0, a1) = (without.adopters_by_period(), with.adopters_by_period());
    out.csv(
        "aggregate.csv",
        &["period", "adopters_no_ec4p", "adopters_ec4p"],
        (0..horizon).map(|t| vec![t.to_string(), a0[t].to_string(), a1[t].to_string()]),
    )?;
    out.csv(
        "expected_prices.csv",
        &["period", "price_no_ec4p", "price_ec4p"],
        (0..horizon).map(|t| {
            vec![
                t.to_string(),
                opt_num(without.expected_prices[t]),
                opt_num(with.expected_prices[t]),
            ]
        }),
    )?;

    if !sweep.is_empty() {
        let runs = sweep
            .iter()
            .map(|pg| run_adoption(&params.with_price_support(*pg)))
            .collect::<Result<Vec<_>, _>>()?;
        let labels: Vec<String> = sweep.iter().map(|pg| format!("adopters_{}", support_label(*pg))).collect();
        let mut header = vec!["period"];
        header.extend(labels.iter().map(String::as_str));
        let counts: Vec<Vec<usize>> = runs.iter().map(AdoptionTrajectory::adopters_by_period).collect();
        out.csv(
            "sweep_aggregate.csv",
            &header,
            (0..horizon).map(|t| {
                let mut row = vec![t.to_string()];
                row.extend(counts.iter().map(|c| c[t].to_string()));
                row
            }),
        )?;
        out.csv(
            "sweep_first_adoption.csv",
            &["price_support", "first_adoption"],
            sweep
                .iter()
                .zip(&runs)
                .map(|(pg, tr)| vec![num(*pg), opt_period(tr.first_adoption())]),
        )?;
    }

    RunManifest::write(&mut out, "adopt", &config_hash(params)?, None, started)
}

pub struct MonteCarloArgs<'a> {
    pub paths: usize,
    pub seed: u64,
    pub sweep: &'a [f64],
    pub convention: RiskConvention,
    pub bins: usize,
    pub frozen: bool,
}

fn write_ensemble(
    out: &mut OutputDir,
    prefix: &str,
    price_support: f64,
    nets: &[f64],
    ensemble: &EnsembleResult,
    args: &MonteCarloArgs<'_>,
) -> Result<BTreeMap<String, (f64, f64)>, CliError> {
    out.csv(
        &format!("{prefix}nets.csv"),
        &["path_index", "x_in", "x_out", "net"],
        ensemble.samples.iter().zip(nets).map(|(s, net)| {
            vec![s.path_index.to_string(), num(s.x_in), num(s.x_in - net), num(*net)]
        }),
    )?;
    let sample = EmpiricalSample::new(nets.to_vec())?;
    let table = empirical_cdf_pdf(&sample, args.bins)?;
    out.csv(
        &format!("{prefix}cdf.csv"),
        &["level", "cdf"],
        table.cdf.iter().map(|p| vec![num(p.level), num(p.cdf)]),
    )?;
    out.csv(
        &format!("{prefix}pdf.csv"),
        &["lower", "upper", "density"],
        table.pdf.iter().map(|b| vec![num(b.lower), num(b.upper), num(b.density)]),
    )?;
    out.json(
        &format!("{prefix}summary.json"),
        &json!({
            "count": sample.len(),
            "mean": sample.mean(),
            "std_dev": sample.std_dev(),
            "min": sample.min(),
            "max": sample.max(),
            "seed": ensemble.seed,
            "price_support": price_support,
        }),
    )?;

    let report = risk_report(&sample, &STANDARD_LEVELS)?;
    let mut selected = BTreeMap::new();
    for l in STANDARD_LEVELS {
        let v = risk(&sample, Measure::Var, l, args.convention)?;
        let a = risk(&sample, Measure::Avar, l, args.convention)?;
        selected.insert(format!("{l:.2}"), (v, a));
    }
    out.json(
        &format!("{prefix}risk_report.json"),
        &json!({
            "convention": args.convention,
            "price_support": price_support,
            "selected": selected.iter().map(|(k, (v, a))| (k.clone(), json!({"var": v, "avar": a}))).collect::<BTreeMap<_, _>>(),
            "report": report,
        }),
    )?;
    Ok(selected)
}

/// Monte Carlo ensemble(s), distribution tables and risk reports.
pub fn montecarlo(params: &ModelParams, args: &MonteCarloArgs<'_>, out_dir: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let mut out = OutputDir::create(out_dir)?;
    if args.sweep.is_empty() {
        let ensemble = monte_carlo(params, args.paths, args.seed)?;
        write_ensemble(&mut out, "", params.policy.price_support, &ensemble.nets(), &ensemble, args)?;
    } else {
        let frozen = if args.frozen {
            Some(monte_carlo(params, args.paths, args.seed)?)
        } else {
            None
        };
        let mut rows = Vec::new();
        for pg in args.sweep {
            let (ensemble, nets) = match &frozen {
                Some(base) => (base.clone(), base.nets_at_support(*pg)),
                None => {
                    let e = monte_carlo(&params.with_price_support(*pg), args.paths, args.seed)?;
                    let nets = e.nets();
                    (e, nets)
                }
            };
            let prefix = format!("{}/", support_label(*pg));
            let selected = write_ensemble(&mut out, &prefix, *pg, &nets, &ensemble, args)?;
            for (level, (v, a)) in selected {
                rows.push(vec![num(*pg), level, num(v), num(a)]);
            }
        }
        out.csv("sweep_risk.csv", &["price_support", "lambda", "var", "avar"], rows)?;
    }
    RunManifest::write(&mut out, "montecarlo", &config_hash(params)?, Some(args.seed), started)
}

/// Trader position read from a positions file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub position: f64,
    pub tech: Tech,
}

/// Parses `position,technology` rows; negative positions are surpluses.
pub fn parse_positions(text: &str) -> Result<Vec<Position>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CliError::Config(format!("line 1: {e}")))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["position", "technology"] {
        return Err(CliError::Config(
            "line 1: expected header `position,technology`".into(),
        ));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::Config(format!("line {line}: {e}"))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let position: f64 = record[0]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| CliError::Config(format!("line {line}: invalid position `{}`", &record[0])))?;
        let tech = match &record[1] {
            "old" => Tech::Old,
            "new" => Tech::New,
            other => {
                return Err(CliError::Config(format!(
                    "line {line}: technology must be `old` or `new`, got `{other}`"
                )))
            }
        };
        out.push(Position { position, tech });
    }
    if out.is_empty() {
        return Err(CliError::Config("no positions listed".into()));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct SellerReport {
    firm: usize,
    capacity: f64,
    submitted: f64,
    cashed: f64,
}

#[derive(Debug, Serialize)]
struct BuyerReport {
    firm: usize,
    need: f64,
    executed: f64,
    uncovered: f64,
}

#[derive(Debug, Serialize)]
pub struct MarketReport {
    status: &'static str,
    price: Option<f64>,
    supply: f64,
    demand: f64,
    sellers: Vec<SellerReport>,
    buyers: Vec<BuyerReport>,
    payoffs: Vec<f64>,
}

/// Solves one exchange on explicit positions.
pub fn market(positions: &[Position], penalty: f64, price_support: f64) -> Result<MarketReport, CliError> {
    if !(penalty > 0.0) || !(price_support >= 0.0) || price_support >= penalty {
        return Err(CliError::Config(
            "need penalty > 0 and 0 <= price_support < penalty".into(),
        ));
    }
    let xs: Vec<f64> = positions.iter().map(|p| p.position).collect();
    let tech = TechnologyVector(positions.iter().map(|p| p.tech).collect());
    let profits = vec![0.0; xs.len()];
    let o: MarketOutcome = clear_market_expected(&xs, &tech, &profits, penalty, price_support)?;
    let status = if o.sides.demand <= 0.0 {
        "no demand"
    } else if o.sides.sellers.is_empty() {
        "no supply"
    } else {
        "cleared"
    };
    Ok(MarketReport {
        status,
        price: o.price,
        supply: o.sides.supply,
        demand: o.sides.demand,
        sellers: o
            .sides
            .sellers
            .iter()
            .enumerate()
            .map(|(k, s)| SellerReport {
                firm: s.firm,
                capacity: s.capacity,
                submitted: o.submissions[k],
                cashed: o.cashed[k],
            })
            .collect(),
        buyers: o
            .sides
            .buyers
            .iter()
            .enumerate()
            .map(|(k, b)| BuyerReport {
                firm: b.firm,
                need: b.need,
                executed: o.executed[k],
                uncovered: o.uncovered[k],
            })
            .collect(),
        payoffs: o.payoffs,
    })
}
