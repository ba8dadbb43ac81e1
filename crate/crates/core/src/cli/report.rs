use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::InstanceSpec;
use crate::combinatorial::{self, DiscreteAllocation, Method};
use crate::cost::CostFunction;
use crate::dual::{self, DualCertificate, DualOptions};
use crate::error::{Error, Result};
use crate::fractional::{self, FractionalAllocation};
use crate::graph::{eigenvector_centrality, Graph};

pub const SWEEP_MULTIPLIERS: [f64; 3] = [1.2, 1.8, 2.4];
pub const REPORT_METHODS: [Method; 4] = [
    Method::Greedy,
    Method::ReverseGreedy,
    Method::Degree,
    Method::Centrality,
];

/// Parameters of the cost-curve figure.
pub const FIG1_BETA_LO: f64 = 1.75e-3;
pub const FIG1_BETA_HI: f64 = 8.66e-3;
pub const FIG1_T: f64 = 1.0;
pub const FIG1_POINTS: usize = 101;

const CENTRALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SweepCase {
    pub multiplier: f64,
    pub fractional: FractionalAllocation,
    /// Relative gap when the fractional solve stopped at its cut budget.
    pub fractional_gap: Option<f64>,
    /// `f_i(β_i*)` of the fractional allocation.
    pub node_costs: Vec<f64>,
    pub allocations: Vec<DiscreteAllocation>,
    pub dual: DualCertificate,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub degrees: Vec<usize>,
    pub centrality: Vec<f64>,
    pub cases: Vec<SweepCase>,
}

/// Runs fractional, combinatorial and dual solvers at every sweep multiplier.
pub fn run_sweep(spec: &InstanceSpec, graph: &Graph) -> Result<Report> {
    let centrality = eigenvector_centrality(graph, CENTRALITY_TOL)?;
    let mut cases = Vec::with_capacity(SWEEP_MULTIPLIERS.len());
    for multiplier in SWEEP_MULTIPLIERS {
        let inst = spec.build_at_multiplier(graph.clone(), multiplier)?;
        let (frac, fractional_gap) = match fractional::solve_fractional(&inst, fractional::DEFAULT_TOL) {
            Ok(a) => (a, None),
            Err(Error::NotConverged {
                cuts,
                gap,
                best_gamma,
            }) => (fractional::allocation_from_gamma(&inst, best_gamma, cuts)?, Some(gap)),
            Err(e) => return Err(e),
        };
        let node_costs = (0..inst.n())
            .map(|i| inst.node_cost(i, frac.beta[i]))
            .collect::<Result<Vec<_>>>()?;
        let allocations = REPORT_METHODS
            .iter()
            .map(|&m| combinatorial::run_method(&inst, m))
            .collect::<Result<Vec<_>>>()?;
        let dual = dual::solve_dual(&inst, &DualOptions::default())?;
        cases.push(SweepCase {
            multiplier,
            fractional: frac,
            fractional_gap,
            node_costs,
            allocations,
            dual,
        });
    }
    Ok(Report {
        degrees: graph.degrees(),
        centrality,
        cases,
    })
}

/// `(β, f(β))` on a uniform grid from `β_lo` to `β_hi`.
pub fn cost_curve_rows(f: &CostFunction, points: usize) -> Result<Vec<(f64, f64)>> {
    if points < 2 {
        return Err(Error::domain("need at least two points"));
    }
    (0..points)
        .map(|k| {
            let beta = if k == points - 1 {
                f.beta_hi()
            } else {
                f.beta_lo() + (f.beta_hi() - f.beta_lo()) * k as f64 / (points - 1) as f64
            };
            Ok((beta, f.eval(beta)?))
        })
        .collect()
}

/// Fraction of nodes of each degree that are vaccinated, by ascending degree.
pub fn degree_fraction_rows(degrees: &[usize], alloc: &DiscreteAllocation) -> Vec<(usize, f64)> {
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (i, &d) in degrees.iter().enumerate() {
        tally.entry(d).or_default().0 += 1;
        if alloc.vaccinated.binary_search(&i).is_ok() {
            tally.entry(d).or_default().1 += 1;
        }
    }
    tally
        .into_iter()
        .map(|(d, (total, hit))| (d, hit as f64 / total as f64))
        .collect()
}

/// Share of the vaccinated set found among the `k` most central nodes, for
/// `k = 1..n`. Ties in centrality go to the lower index.
pub fn centrality_cumulative_rows(centrality: &[f64], alloc: &DiscreteAllocation) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..centrality.len()).collect();
    order.sort_by(|&a, &b| centrality[b].total_cmp(&centrality[a]).then(a.cmp(&b)));
    let total = alloc.vaccinated.len();
    let mut hit = 0;
    order
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            if alloc.vaccinated.binary_search(&i).is_ok() {
                hit += 1;
            }
            let frac = if total == 0 { 0.0 } else { hit as f64 / total as f64 };
            (k + 1, frac)
        })
        .collect()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the figure and summary CSVs into `dir` and returns their paths.
pub fn write_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let curve = CostFunction::reciprocal(FIG1_BETA_LO, FIG1_BETA_HI, FIG1_T)?;
    let path = dir.join("fig1_cost_curve.csv");
    write_csv(
        &path,
        &["beta", "cost"],
        cost_curve_rows(&curve, FIG1_POINTS)?
            .into_iter()
            .map(|(b, c)| vec![b.to_string(), c.to_string()])
            .collect(),
    )?;
    written.push(path);

    let mut summary = Vec::new();
    for case in &report.cases {
        let tag = case.multiplier;

        let path = dir.join(format!("fig2_cost_degree_x{tag}.csv"));
        write_csv(
            &path,
            &["cost", "degree"],
            case.node_costs
                .iter()
                .zip(&report.degrees)
                .map(|(c, d)| vec![c.to_string(), d.to_string()])
                .collect(),
        )?;
        written.push(path);

        let mut fig3 = Vec::new();
        let mut fig4 = Vec::new();
        for alloc in &case.allocations {
            let method = alloc.method.to_string();
            for (d, f) in degree_fraction_rows(&report.degrees, alloc) {
                fig3.push(vec![d.to_string(), f.to_string(), method.clone()]);
            }
            for (k, f) in centrality_cumulative_rows(&report.centrality, alloc) {
                fig4.push(vec![k.to_string(), f.to_string(), method.clone()]);
            }
            summary.push(vec![
                method,
                tag.to_string(),
                alloc.objective_cb.to_string(),
                alloc.margin.to_string(),
                case.dual.value.to_string(),
            ]);
        }
        let path = dir.join(format!("fig3_degree_fraction_x{tag}.csv"));
        write_csv(&path, &["degree", "fraction_vaccinated", "method"], fig3)?;
        written.push(path);
        let path = dir.join(format!("fig4_centrality_cumulative_x{tag}.csv"));
        write_csv(&path, &["centrality_rank", "cumulative_fraction", "method"], fig4)?;
        written.push(path);
    }

    let path = dir.join("summary.csv");
    write_csv(
        &path,
        &["method", "multiplier", "objective_cb", "margin", "dual_bound"],
        summary,
    )?;
    written.push(path);
    Ok(written)
}
