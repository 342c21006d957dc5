//! Last-round correlation power analysis, MTD and repeatability.

mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::aes::{expand_key, invert_key_schedule, shift_rows_dst, Block, BLOCK_LEN};
use crate::error::{Error, Result};
use crate::leakage::{hypothesis_row, GUESSES};
use crate::platform::synth::synthesize_traces;
use crate::platform::traceset::TraceSet;
use crate::rng::derive_seed;
use crate::scenario::ScenarioSpec;

pub use report::{write_curve_csv, write_report_csv, write_summary_json, TraceCountRow};

/// Sample Pearson coefficient; 0 when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation from raw sums; 0 on zero variance.
#[inline]
fn rho_from_sums(n: f64, sx: f64, sxx: f64, sy: f64, syy: f64, sxy: f64) -> f64 {
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    ((n * sxy - sx * sy) / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub byte_index: usize,
    pub per_guess_max_abs_rho: Vec<f64>,
    pub winning_guess: u8,
    /// Winner's score minus the runner-up's.
    pub rho_margin: f64,
}

impl CorrelationCurve {
    fn from_scores(byte_index: usize, mut scores: Vec<f64>) -> Self {
        // Guesses whose correlations are equal in exact arithmetic can differ
        // in the last bits depending on rounding order (for instance after
        // rescaling the samples). Snapping to a fine grid makes them tie.
        for s in &mut scores {
            *s = (*s * SCORE_GRID).round() / SCORE_GRID;
        }
        let mut best = 0usize;
        for g in 1..GUESSES {
            if scores[g] > scores[best] {
                best = g;
            }
        }
        let runner_up = (0..GUESSES)
            .filter(|&g| g != best)
            .map(|g| scores[g])
            .fold(f64::NEG_INFINITY, f64::max);
        CorrelationCurve {
            byte_index,
            rho_margin: scores[best] - runner_up,
            winning_guess: best as u8,
            per_guess_max_abs_rho: scores,
        }
    }

    /// 1-based rank of `guess` (ties resolved towards lower guesses).
    pub fn rank_of(&self, guess: u8) -> usize {
        let s = &self.per_guess_max_abs_rho;
        let g = guess as usize;
        1 + (0..GUESSES).filter(|&o| s[o] > s[g] || (s[o] == s[g] && o < g)).count()
    }
}

const SCORE_GRID: f64 = (1u64 << 36) as f64;

/// Which sample columns the attack correlates against.
pub fn select_columns(traces: &TraceSet, use_window: bool) -> Result<Vec<usize>> {
    if use_window {
        let (a, b) = traces
            .window
            .ok_or_else(|| Error::Precondition("trace set has no tenth-round window".into()))?;
        Ok((a as usize..b as usize).collect())
    } else {
        Ok((0..traces.samples_per_trace()).collect())
    }
}

/// Running sums for one register byte: Σh, Σh², Σt, Σt², Σh·t.
///
/// Samples are integers in practice, so every sum is exact in f64 and the
/// result does not depend on trace order.
struct ByteAccumulator {
    p: usize,
    columns: Vec<usize>,
    sign: f64,
    n: usize,
    sum_h: [f64; GUESSES],
    sum_hh: [f64; GUESSES],
    sum_t: Vec<f64>,
    sum_tt: Vec<f64>,
    /// column-major: `sum_ht[c * 256 + g]`
    sum_ht: Vec<f64>,
}

impl ByteAccumulator {
    fn new(p: usize, columns: Vec<usize>, negate: bool) -> Self {
        let c = columns.len();
        ByteAccumulator {
            p,
            sign: if negate { -1.0 } else { 1.0 },
            n: 0,
            sum_h: [0.0; GUESSES],
            sum_hh: [0.0; GUESSES],
            sum_t: vec![0.0; c],
            sum_tt: vec![0.0; c],
            sum_ht: vec![0.0; c * GUESSES],
            columns,
        }
    }

    fn add(&mut self, ciphertext: &Block, samples: &[f32]) {
        let mut row = [0u8; GUESSES];
        hypothesis_row(ciphertext, self.p, &mut row);
        let mut h = [0f64; GUESSES];
        for (d, &s) in h.iter_mut().zip(&row) {
            *d = s as f64;
        }
        for ((s, ss), &v) in self.sum_h.iter_mut().zip(self.sum_hh.iter_mut()).zip(&h) {
            *s += v;
            *ss += v * v;
        }
        for (ci, &col) in self.columns.iter().enumerate() {
            let t = self.sign * samples[col] as f64;
            self.sum_t[ci] += t;
            self.sum_tt[ci] += t * t;
            let acc = &mut self.sum_ht[ci * GUESSES..(ci + 1) * GUESSES];
            for (a, &hv) in acc.iter_mut().zip(&h) {
                *a += hv * t;
            }
        }
        self.n += 1;
    }

    fn curve(&self) -> CorrelationCurve {
        let n = self.n as f64;
        let mut scores = vec![0.0; GUESSES];
        if self.n >= 2 {
            for ci in 0..self.columns.len() {
                let acc = &self.sum_ht[ci * GUESSES..(ci + 1) * GUESSES];
                for g in 0..GUESSES {
                    let r = rho_from_sums(n, self.sum_h[g], self.sum_hh[g], self.sum_t[ci], self.sum_tt[ci], acc[g]);
                    scores[g] = f64::max(scores[g], r.abs());
                }
            }
        }
        CorrelationCurve::from_scores(self.p, scores)
    }
}

/// Scores all 256 guesses for register byte `p`.
pub fn attack_byte(traces: &TraceSet, p: usize, use_window: bool) -> Result<CorrelationCurve> {
    if p >= BLOCK_LEN {
        return Err(Error::InvalidArgument(format!("byte index {p} out of range")));
    }
    if traces.len() < 2 {
        return Err(Error::Precondition(format!("need at least 2 traces, got {}", traces.len())));
    }
    let mut acc = ByteAccumulator::new(p, select_columns(traces, use_window)?, traces.negate);
    for i in 0..traces.len() {
        acc.add(&traces.ciphertexts[i], traces.trace(i));
    }
    Ok(acc.curve())
}

/// Minimum traces to disclosure on the tested grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
pub enum Mtd {
    Reached(usize),
    NotReached,
}

impl Mtd {
    pub fn traces(self) -> Option<usize> {
        match self {
            Mtd::Reached(n) => Some(n),
            Mtd::NotReached => None,
        }
    }

    /// Traces as a float, infinite when not reached.
    pub fn as_f64(self) -> f64 {
        self.traces().map_or(f64::INFINITY, |n| n as f64)
    }
}

impl std::fmt::Display for Mtd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mtd::Reached(n) => write!(f, "{n}"),
            Mtd::NotReached => f.write_str("not reached"),
        }
    }
}

impl Serialize for Mtd {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Mtd::Reached(n) => s.serialize_u64(*n as u64),
            Mtd::NotReached => s.serialize_str("not reached"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackReport {
    pub recovered_round10_key: Block,
    pub recovered_master_key: Block,
    /// Only known in evaluation mode.
    pub bytes_correct: Option<u8>,
    pub mtd: Option<Mtd>,
    pub per_byte_mtd: Option<Vec<Mtd>>,
    pub curves: Vec<CorrelationCurve>,
    pub trial_seed: Option<u64>,
    pub traces: usize,
    pub use_window: bool,
}

impl AttackReport {
    fn from_curves(curves: Vec<CorrelationCurve>, traces: usize, use_window: bool) -> Self {
        let mut k10 = [0u8; BLOCK_LEN];
        for c in &curves {
            k10[shift_rows_dst(c.byte_index)] = c.winning_guess;
        }
        let round10 = Block(k10);
        AttackReport {
            recovered_round10_key: round10,
            recovered_master_key: invert_key_schedule(&round10),
            bytes_correct: None,
            mtd: None,
            per_byte_mtd: None,
            curves,
            trial_seed: None,
            traces,
            use_window,
        }
    }

    /// Records how many round-10 key bytes match `true_key`'s schedule.
    pub fn score_against(&mut self, true_key: &Block) {
        let k10 = expand_key(true_key).last();
        let ok = (0..BLOCK_LEN)
            .filter(|&i| k10[i] == self.recovered_round10_key[i])
            .count();
        self.bytes_correct = Some(ok as u8);
    }
}

/// Attacks all 16 bytes and reassembles the round-10 and master keys.
pub fn recover_key(traces: &TraceSet, use_window: bool) -> Result<AttackReport> {
    if traces.len() < 2 {
        return Err(Error::Precondition(format!("need at least 2 traces, got {}", traces.len())));
    }
    select_columns(traces, use_window)?;
    let curves = (0..BLOCK_LEN)
        .into_par_iter()
        .map(|p| attack_byte(traces, p, use_window))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackReport::from_curves(curves, traces.len(), use_window))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MtdResult {
    pub overall: Mtd,
    pub per_byte: Vec<Mtd>,
    /// Tested trace counts.
    pub grid: Vec<usize>,
    /// Correct bytes at each grid point.
    pub correct: Vec<[bool; BLOCK_LEN]>,
    /// Correlation of the true and best wrong guess per grid point and byte.
    pub history: Vec<TraceCountRow>,
    /// Report of the attack on all traces.
    pub final_report: AttackReport,
}

impl MtdResult {
    pub fn bytes_correct_at_end(&self) -> u8 {
        self.correct.last().map_or(0, |c| c.iter().filter(|&&b| b).count() as u8)
    }
}

fn stable_from(grid: &[usize], ok: impl Fn(usize) -> bool) -> Mtd {
    let mut first = None;
    for (i, &n) in grid.iter().enumerate() {
        if ok(i) {
            first.get_or_insert(n);
        } else {
            first = None;
        }
    }
    first.map_or(Mtd::NotReached, Mtd::Reached)
}

/// Attacks every prefix `step, 2*step, ... <= N` and applies the trailing
/// stability rule per byte. Each grid point gives exactly what
/// [`recover_key`] returns on that prefix.
pub fn compute_mtd(traces: &TraceSet, true_key: &Block, step: usize, use_window: bool) -> Result<MtdResult> {
    if step == 0 {
        return Err(Error::InvalidArgument("MTD step must be at least 1".into()));
    }
    let columns = select_columns(traces, use_window)?;
    let grid: Vec<usize> = (1..=traces.len() / step).map(|k| k * step).collect();
    let k10 = expand_key(true_key).last();

    // per byte: curves at each grid point
    let per_byte: Vec<Vec<CorrelationCurve>> = (0..BLOCK_LEN)
        .into_par_iter()
        .map(|p| {
            let mut acc = ByteAccumulator::new(p, columns.clone(), traces.negate);
            let mut out = Vec::with_capacity(grid.len());
            let mut next = 0;
            for &n in &grid {
                while next < n {
                    acc.add(&traces.ciphertexts[next], traces.trace(next));
                    next += 1;
                }
                out.push(acc.curve());
            }
            out
        })
        .collect();

    let mut correct = vec![[false; BLOCK_LEN]; grid.len()];
    let mut history = Vec::new();
    for (gi, &n) in grid.iter().enumerate() {
        for p in 0..BLOCK_LEN {
            let curve = &per_byte[p][gi];
            let truth = k10[shift_rows_dst(p)];
            // fewer than two traces carry no information
            correct[gi][p] = n >= 2 && curve.winning_guess == truth;
            let wrong = (0..GUESSES)
                .filter(|&g| g != truth as usize)
                .map(|g| curve.per_guess_max_abs_rho[g])
                .fold(0.0, f64::max);
            history.push(TraceCountRow {
                traces: n,
                byte_index: p,
                rho_correct: curve.per_guess_max_abs_rho[truth as usize],
                rho_best_wrong: wrong,
                rank_correct: curve.rank_of(truth),
            });
        }
    }
    let per_byte_mtd: Vec<Mtd> = (0..BLOCK_LEN)
        .map(|p| stable_from(&grid, |gi| correct[gi][p]))
        .collect();
    let overall = if per_byte_mtd.contains(&Mtd::NotReached) {
        Mtd::NotReached
    } else {
        per_byte_mtd.iter().copied().max().unwrap_or(Mtd::NotReached)
    };

    let final_curves = if grid.last() == Some(&traces.len()) {
        per_byte.iter().map(|c| c.last().unwrap().clone()).collect()
    } else if traces.len() >= 2 {
        recover_key(traces, use_window)?.curves
    } else {
        (0..BLOCK_LEN).map(|p| CorrelationCurve::from_scores(p, vec![0.0; GUESSES])).collect()
    };
    let mut final_report = AttackReport::from_curves(final_curves, traces.len(), use_window);
    final_report.score_against(true_key);
    final_report.mtd = Some(overall);
    final_report.per_byte_mtd = Some(per_byte_mtd.clone());

    Ok(MtdResult { overall, per_byte: per_byte_mtd, grid, correct, history, final_report })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub mtd: Mtd,
    pub bytes_correct: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepeatabilityReport {
    pub success_rate: f64,
    pub budget: usize,
    pub trials: Vec<TrialResult>,
}

impl RepeatabilityReport {
    /// Median MTD, not-reached trials counting as infinitely many traces.
    pub fn median_mtd(&self) -> f64 {
        median(self.trials.iter().map(|t| t.mtd.as_f64()).collect())
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialOptions {
    pub step: usize,
    pub sensor: usize,
    pub use_window: bool,
    pub seed: u64,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions { step: 100, sensor: 0, use_window: false, seed: 0 }
    }
}

pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, "trial", trial as u64)
}

/// Runs one trial: synthesize `budget` traces and measure the MTD.
pub fn run_trial(spec: &ScenarioSpec, key: &Block, budget: usize, opts: &TrialOptions, trial: usize) -> Result<MtdResult> {
    let seed = trial_seed(opts.seed, trial);
    let mut sets = synthesize_traces(spec, key, budget, seed)?;
    if opts.sensor >= sets.len() {
        return Err(Error::InvalidArgument(format!("no sensor {}", opts.sensor)));
    }
    let traces = sets.swap_remove(opts.sensor);
    let mut r = compute_mtd(&traces, key, opts.step.min(budget), opts.use_window)?;
    r.final_report.trial_seed = Some(seed);
    Ok(r)
}

/// Independent trials at a fixed budget; success means 16/16 bytes stably
/// recovered within the budget.
pub fn repeatability(
    spec: &ScenarioSpec,
    key: &Block,
    trials: usize,
    budget: usize,
    opts: &TrialOptions,
) -> Result<RepeatabilityReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least one trace".into()));
    }
    let mut results = Vec::with_capacity(trials);
    for t in 0..trials {
        let r = run_trial(spec, key, budget, opts, t)?;
        results.push(TrialResult {
            trial: t,
            seed: trial_seed(opts.seed, t),
            mtd: r.overall,
            bytes_correct: r.bytes_correct_at_end(),
        });
    }
    let ok = results.iter().filter(|r| r.mtd != Mtd::NotReached).count();
    Ok(RepeatabilityReport { success_rate: ok as f64 / trials as f64, budget, trials: results })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaCalibration {
    pub electronic_sigma: f64,
    /// Every (sigma, median MTD) evaluated, in order.
    pub steps: Vec<(f64, f64)>,
    pub report: RepeatabilityReport,
}

/// Bisects the electronic noise until the median MTD over `trials` lands in
/// `band` with every trial succeeding within `budget`.
pub fn calibrate_electronic_sigma(
    spec: &ScenarioSpec,
    key: &Block,
    trials: usize,
    budget: usize,
    band: (f64, f64),
    bracket: (f64, f64),
    opts: &TrialOptions,
) -> Result<SigmaCalibration> {
    let (mut lo, mut hi) = bracket;
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::InvalidArgument("bad sigma bracket".into()));
    }
    let mut steps = Vec::new();
    for _ in 0..24 {
        let sigma = 0.5 * (lo + hi);
        let mut s = spec.clone();
        s.noise.electronic_sigma = sigma;
        let report = repeatability(&s, key, trials, budget, opts)?;
        let m = report.median_mtd();
        steps.push((sigma, m));
        if m < band.0 {
            lo = sigma;
        } else if m > band.1 || report.success_rate < 1.0 {
            hi = sigma;
        } else {
            return Ok(SigmaCalibration { electronic_sigma: sigma, steps, report });
        }
    }
    Err(Error::Precondition(format!("no sigma in {bracket:?} puts the median MTD in {band:?}")))
}
