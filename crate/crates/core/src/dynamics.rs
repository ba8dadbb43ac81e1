//! Forward simulation of networked SIS dynamics.
//!
//! * mean-field ODEs `dp_i/dt = (1 - p_i) β_i Σ_j a_ij p_j - δ_i p_i`
//! * their linear upper bound `dp̂_i/dt = β_i Σ_j a_ij p̂_j - δ_i p̂_i`
//! * the exact continuous-time Markov chain, sampled by Gillespie's method
//!   (small graphs only)

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::spectral::RateMatrices;

/// Node-count guard for the exact Markov simulation.
pub const MARKOV_MAX_NODES: usize = 20;
pub const DEFAULT_SAMPLE_POINTS: usize = 64;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Writes `t,p_0,...,p_{n-1}` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("p_{i}")));
        w.write_record(&header)?;
        for (t, p) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(p.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Step size `0.01 / max(max_i β_i d_i, max_i δ_i)`.
pub fn default_dt(g: &Graph, r: &RateMatrices) -> f64 {
    let spread = (0..g.n())
        .map(|i| r.beta()[i] * g.degree(i) as f64)
        .fold(0.0_f64, f64::max);
    let cure = r.delta().iter().copied().fold(0.0_f64, f64::max);
    0.01 / spread.max(cure)
}

#[derive(Clone, Copy)]
enum Model {
    MeanField,
    Linear,
}

pub fn simulate_meanfield(
    g: &Graph,
    r: &RateMatrices,
    p0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate(g, r, p0, t_end, dt, 1, Model::MeanField)
}

pub fn simulate_linear_bound(
    g: &Graph,
    r: &RateMatrices,
    p0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate(g, r, p0, t_end, dt, 1, Model::Linear)
}

/// Mean-field run keeping only every `record_every`-th step (plus the end).
pub fn simulate_meanfield_sampled(
    g: &Graph,
    r: &RateMatrices,
    p0: &[f64],
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory> {
    integrate(g, r, p0, t_end, dt, record_every.max(1), Model::MeanField)
}

pub fn simulate_linear_bound_sampled(
    g: &Graph,
    r: &RateMatrices,
    p0: &[f64],
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory> {
    integrate(g, r, p0, t_end, dt, record_every.max(1), Model::Linear)
}

fn integrate(
    g: &Graph,
    r: &RateMatrices,
    p0: &[f64],
    t_end: f64,
    dt: f64,
    record_every: usize,
    model: Model,
) -> Result<Trajectory> {
    let n = g.n();
    if r.len() != n || p0.len() != n {
        return Err(Error::Dimension {
            what: "initial state / rates",
            expected: n,
            got: if r.len() != n { r.len() } else { p0.len() },
        });
    }
    if !(dt > 0.0) || !(t_end >= dt) || !t_end.is_finite() {
        return Err(Error::domain(format!(
            "need dt > 0 and t_end >= dt (dt = {dt}, t_end = {t_end})"
        )));
    }
    if let Some(i) = p0.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::domain(format!(
            "initial probability at node {i} is {} (outside [0, 1])",
            p0[i]
        )));
    }

    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let beta = r.beta();
    let delta = r.delta();

    let mut spread = vec![0.0; n];
    let rhs = |p: &[f64], out: &mut [f64], spread: &mut [f64]| {
        g.adjacency_mul(p, spread);
        for i in 0..n {
            let infect = beta[i] * spread[i];
            out[i] = match model {
                Model::MeanField => (1.0 - p[i]) * infect - delta[i] * p[i],
                Model::Linear => infect - delta[i] * p[i],
            };
        }
    };

    let mut p = p0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut times = vec![0.0];
    let mut states = vec![p.clone()];

    for step in 1..=steps {
        rhs(&p, &mut k1, &mut spread);
        for i in 0..n {
            tmp[i] = p[i] + 0.5 * h * k1[i];
        }
        rhs(&tmp, &mut k2, &mut spread);
        for i in 0..n {
            tmp[i] = p[i] + 0.5 * h * k2[i];
        }
        rhs(&tmp, &mut k3, &mut spread);
        for i in 0..n {
            tmp[i] = p[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4, &mut spread);
        for i in 0..n {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Model::MeanField = model {
            for x in &mut p {
                *x = x.clamp(0.0, 1.0);
            }
        }
        if step % record_every == 0 || step == steps {
            times.push(if step == steps { t_end } else { step as f64 * h });
            states.push(p.clone());
        }
    }
    Ok(Trajectory { times, states })
}

/// Asymptotic decay rate: least-squares slope of `-ln ‖p(t)‖∞` over the
/// trailing `window_fraction` of the samples. Returns `+∞` when the
/// trajectory hits zero inside the window.
pub fn estimate_decay_rate(traj: &Trajectory, window_fraction: f64) -> Result<f64> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::domain(format!(
            "window fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let len = traj.len();
    let start = ((1.0 - window_fraction) * len as f64).floor() as usize;
    let start = start.min(len.saturating_sub(2));
    if len < 2 {
        return Err(Error::domain("need at least two samples to fit a rate"));
    }
    let mut ts = Vec::with_capacity(len - start);
    let mut ys = Vec::with_capacity(len - start);
    for k in start..len {
        let norm = traj.states[k].iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        if !(norm > 0.0) {
            return Ok(f64::INFINITY);
        }
        ts.push(traj.times[k]);
        ys.push(norm.ln());
    }
    let m = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(&ys) {
        sxy += (t - t_mean) * (y - y_mean);
        sxx += (t - t_mean) * (t - t_mean);
    }
    Ok(-sxy / sxx)
}

/// Monte Carlo estimate of per-node infection marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovEstimate {
    pub times: Vec<f64>,
    /// `mean[k][i]`: fraction of trials with node `i` infected at `times[k]`.
    pub mean: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
    pub trials: usize,
}

pub fn simulate_exact_markov(
    g: &Graph,
    r: &RateMatrices,
    x0: &[bool],
    t_end: f64,
    trials: usize,
    seed: u64,
) -> Result<MarkovEstimate> {
    simulate_exact_markov_at(g, r, x0, t_end, DEFAULT_SAMPLE_POINTS, trials, seed)
}

/// Gillespie simulation sampled at `samples` uniform times on `[0, t_end]`.
/// Trial `k` draws from its own stream seeded with `seed + k`.
pub fn simulate_exact_markov_at(
    g: &Graph,
    r: &RateMatrices,
    x0: &[bool],
    t_end: f64,
    samples: usize,
    trials: usize,
    seed: u64,
) -> Result<MarkovEstimate> {
    let n = g.n();
    if n > MARKOV_MAX_NODES {
        return Err(Error::TooLarge {
            what: "exact Markov simulation",
            n,
            limit: MARKOV_MAX_NODES,
        });
    }
    if r.len() != n || x0.len() != n {
        return Err(Error::Dimension {
            what: "initial state / rates",
            expected: n,
            got: if r.len() != n { r.len() } else { x0.len() },
        });
    }
    if trials == 0 || samples < 2 || !(t_end > 0.0) {
        return Err(Error::domain(
            "need trials >= 1, at least two sample times and t_end > 0",
        ));
    }
    let times: Vec<f64> = (0..samples)
        .map(|k| t_end * k as f64 / (samples - 1) as f64)
        .collect();
    let start: u32 = x0
        .iter()
        .enumerate()
        .filter(|(_, &x)| x)
        .fold(0, |acc, (i, _)| acc | (1 << i));
    let masks: Vec<u32> = (0..n)
        .map(|i| g.neighbors(i).iter().fold(0u32, |acc, &j| acc | (1 << j)))
        .collect();

    let mut counts = vec![vec![0u64; n]; samples];
    let mut rates = vec![0.0; n];
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
        let mut state = start;
        let mut t = 0.0;
        let mut k = 0;
        while k < samples {
            let mut total = 0.0;
            for i in 0..n {
                rates[i] = if state & (1 << i) != 0 {
                    r.delta()[i]
                } else {
                    r.beta()[i] * (state & masks[i]).count_ones() as f64
                };
                total += rates[i];
            }
            let t_next = if total > 0.0 {
                let wait: f64 = rng.sample(Exp1);
                t + wait / total
            } else {
                f64::INFINITY
            };
            while k < samples && times[k] < t_next {
                for (i, c) in counts[k].iter_mut().enumerate() {
                    if state & (1 << i) != 0 {
                        *c += 1;
                    }
                }
                k += 1;
            }
            if k == samples {
                break;
            }
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &rate) in rates.iter().enumerate() {
                if pick < rate {
                    chosen = i;
                    break;
                }
                pick -= rate;
            }
            // Rounding can leave `pick` past the last positive rate.
            while rates[chosen] == 0.0 {
                chosen -= 1;
            }
            state ^= 1 << chosen;
            t = t_next;
        }
    }

    let nt = trials as f64;
    let mean: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / nt).collect())
        .collect();
    let std_err = mean
        .iter()
        .map(|row| row.iter().map(|&p| (p * (1.0 - p) / nt).sqrt()).collect())
        .collect();
    Ok(MarkovEstimate {
        times,
        mean,
        std_err,
        trials,
    })
}
