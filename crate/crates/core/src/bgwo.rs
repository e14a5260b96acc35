//! Binary grey wolf feature selection scored by 1 - F1 of a one-vs-rest
//! kernel Naive Bayes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureMatrix;
use crate::evalreport::ClassCounts;
use crate::nbayes::{self, ClassLabel, DensityTable, NbError};
use crate::signal_io::SeizureType;

#[derive(Debug, Error)]
pub enum BgwoError {
    #[error("iteration budget of {0} exhausted")]
    Exhausted(usize),
    #[error("train and eval matrices use different feature registries")]
    RegistryMismatch,
    #[error("target class {0} has no training rows")]
    MissingTarget(SeizureType),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Nb(#[from] NbError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BgwoConfig {
    pub population: usize,
    pub max_iterations: usize,
    pub early_stop_window: usize,
    pub early_stop_ratio: f64,
    /// Leader-acceptance margin at the final iteration; grows linearly from 0.
    pub bias_margin: f64,
    /// Initial value of the GWO `a` coefficient, decayed linearly to 0.
    pub a_start: f64,
}

impl Default for BgwoConfig {
    fn default() -> Self {
        Self {
            population: 8,
            max_iterations: 100,
            early_stop_window: 6,
            early_stop_ratio: 0.05,
            bias_margin: 0.01,
            a_start: 2.0,
        }
    }
}

impl BgwoConfig {
    pub fn validate(&self) -> Result<(), BgwoError> {
        let bad = |m: &str| Err(BgwoError::BadConfig(m.into()));
        if self.population < 4 {
            return bad("population must be at least 4");
        }
        if self.early_stop_window < 2 {
            return bad("early_stop_window must be at least 2");
        }
        if !(self.early_stop_ratio >= 0.0) || !(self.bias_margin >= 0.0) || !(self.a_start >= 0.0) {
            return bad("early_stop_ratio, bias_margin and a_start must be non-negative");
        }
        Ok(())
    }

    /// Acceptance margin at iteration `t`.
    pub fn margin(&self, t: usize) -> f64 {
        if self.max_iterations == 0 {
            0.0
        } else {
            self.bias_margin * t as f64 / self.max_iterations as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wolf {
    pub mask: Vec<bool>,
    /// `f64::INFINITY` for empty masks, undefined F1, or not yet evaluated.
    pub fitness: f64,
}

impl Wolf {
    pub fn unevaluated(mask: Vec<bool>) -> Self {
        Self { mask, fitness: f64::INFINITY }
    }

    pub fn selected(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WolfPack {
    pub wolves: Vec<Wolf>,
    /// W1, W2, W3, best first.
    pub leaders: Vec<Wolf>,
    pub t: usize,
    pub max_iterations: usize,
    /// Best fitness after initialisation, then after each step.
    pub best_history: Vec<f64>,
    pub seed: u64,
}

/// Independent stream per (iteration, wolf) so parallel evaluation cannot
/// change the draws. Iteration 0 is initialisation.
fn wolf_rng(seed: u64, t: usize, wolf: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((t as u64) << 32) | wolf as u64);
    rng
}

fn evaluate<F>(masks: Vec<Vec<bool>>, fitness: &F) -> Vec<Wolf>
where
    F: Fn(&[bool]) -> f64 + Sync,
{
    masks
        .into_par_iter()
        .map(|mask| {
            let f = if mask.iter().any(|&m| m) { fitness(&mask) } else { f64::INFINITY };
            Wolf { mask, fitness: f }
        })
        .collect()
}

/// Top three distinct masks from current leaders plus candidates, ranked by
/// fitness with candidates handicapped by `margin`: a candidate displaces a
/// leader only by beating it by more than the margin. Ties favour current
/// leaders, then earlier candidates. Result is sorted by true fitness.
fn select_leaders(current: &[Wolf], candidates: &[Wolf], margin: f64) -> Vec<Wolf> {
    let mut pool: Vec<(f64, &Wolf)> = current.iter().map(|w| (w.fitness, w)).collect();
    pool.extend(candidates.iter().map(|w| (w.fitness + margin, w)));
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut leaders: Vec<Wolf> = Vec::with_capacity(3);
    for (_, w) in &pool {
        if leaders.len() == 3 {
            break;
        }
        if !leaders.iter().any(|l| l.mask == w.mask) {
            leaders.push((*w).clone());
        }
    }
    // fewer than three distinct masks: pad with duplicates
    for (_, w) in &pool {
        if leaders.len() == 3 {
            break;
        }
        leaders.push((*w).clone());
    }
    leaders.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    leaders
}

impl WolfPack {
    /// Random non-empty masks of `width` bits, evaluated.
    pub fn init<F>(width: usize, cfg: &BgwoConfig, seed: u64, fitness: &F) -> Result<Self, BgwoError>
    where
        F: Fn(&[bool]) -> f64 + Sync,
    {
        cfg.validate()?;
        if width == 0 {
            return Err(BgwoError::BadConfig("no features to select from".into()));
        }
        let masks = (0..cfg.population)
            .map(|i| {
                let mut rng = wolf_rng(seed, 0, i);
                let mut mask: Vec<bool> = (0..width).map(|_| rng.random_bool(0.5)).collect();
                if !mask.iter().any(|&m| m) {
                    mask[rng.random_range(0..width)] = true;
                }
                mask
            })
            .collect();
        let wolves = evaluate(masks, fitness);
        let leaders = select_leaders(&[], &wolves, 0.0);
        let best = leaders[0].fitness;
        Ok(Self {
            wolves,
            leaders,
            t: 0,
            max_iterations: cfg.max_iterations,
            best_history: vec![best],
            seed,
        })
    }

    pub fn best(&self) -> &Wolf {
        &self.leaders[0]
    }

    /// Leader order holds, and no wolf beats W3 by more than the current
    /// acceptance margin.
    pub fn check_invariants(&self, cfg: &BgwoConfig) -> Result<(), String> {
        if self.leaders.windows(2).any(|w| w[0].fitness > w[1].fitness) {
            return Err("leaders out of order".into());
        }
        let w3 = self.leaders.last().ok_or("no leaders")?.fitness;
        let m = cfg.margin(self.t);
        let beats = |w: &&Wolf| w.fitness + m < w3 && !self.leaders.iter().any(|l| l.mask == w.mask);
        if let Some(w) = self.wolves.iter().find(beats) {
            return Err(format!("wolf with fitness {} beats W3 {} by more than {m}", w.fitness, w3));
        }
        if self.best_history.windows(2).any(|w| w[1] > w[0]) {
            return Err("best_history increased".into());
        }
        if self.t > self.max_iterations {
            return Err("iteration past budget".into());
        }
        Ok(())
    }

    /// One iteration: move every wolf toward the three leaders, evaluate,
    /// and update the leaders with the iteration-dependent margin.
    pub fn step<F>(&self, cfg: &BgwoConfig, fitness: &F) -> Result<Self, BgwoError>
    where
        F: Fn(&[bool]) -> f64 + Sync,
    {
        if self.t >= self.max_iterations {
            return Err(BgwoError::Exhausted(self.max_iterations));
        }
        let t = self.t;
        let a = cfg.a_start * (1.0 - t as f64 / self.max_iterations as f64);
        let masks: Vec<Vec<bool>> = self
            .wolves
            .iter()
            .enumerate()
            .map(|(i, wolf)| {
                let mut rng = wolf_rng(self.seed, t + 1, i);
                wolf.mask
                    .iter()
                    .enumerate()
                    .map(|(d, &x)| {
                        let x = f64::from(u8::from(x));
                        let moves: Vec<bool> = self
                            .leaders
                            .iter()
                            .map(|leader| {
                                let xl = f64::from(u8::from(leader.mask[d]));
                                let big_a = 2.0 * a * rng.random::<f64>() - a;
                                let big_c = 2.0 * rng.random::<f64>();
                                let dist = (big_c * xl - x).abs();
                                let cstep = 1.0 / (1.0 + (-10.0 * (big_a * dist - 0.5)).exp());
                                let bstep = f64::from(u8::from(cstep >= rng.random::<f64>()));
                                xl + bstep >= 1.0
                            })
                            .collect();
                        moves[rng.random_range(0..moves.len())]
                    })
                    .collect()
            })
            .collect();
        let wolves = evaluate(masks, fitness);

        let leaders = select_leaders(&self.leaders, &wolves, cfg.margin(t + 1));
        let new_best = wolves.iter().map(|w| w.fitness).fold(f64::INFINITY, f64::min);
        let prev = *self.best_history.last().expect("history starts at init");
        let mut best_history = self.best_history.clone();
        best_history.push(prev.min(new_best).min(leaders[0].fitness));
        Ok(Self {
            wolves,
            leaders,
            t: t + 1,
            max_iterations: self.max_iterations,
            best_history,
            seed: self.seed,
        })
    }
}

fn pop_std(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Plateau test on a best-fitness trace: the spread of the last `window`
/// values is under `ratio` of the spread of the whole trace, or the whole
/// trace is flat.
pub fn trace_plateaued(history: &[f64], window: usize, ratio: f64) -> bool {
    if history.len() < window || window == 0 {
        return false;
    }
    let tail = &history[history.len() - window..];
    if tail.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let finite: Vec<f64> = history.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.iter().all(|&v| v == finite[0]) {
        return true;
    }
    let total = pop_std(&finite);
    pop_std(tail) < ratio * total
}

pub fn should_stop(pack: &WolfPack, cfg: &BgwoConfig) -> bool {
    pack.t >= cfg.early_stop_window
        && trace_plateaued(&pack.best_history, cfg.early_stop_window, cfg.early_stop_ratio)
}

/// Target-class F1 from binary predictions (index 0 = target).
fn target_f1(truth: &[usize], pred: &[usize]) -> Option<f64> {
    let mut k = ClassCounts::default();
    for (&t, &p) in truth.iter().zip(pred) {
        match (t == 0, p == 0) {
            (true, true) => k.tp += 1,
            (false, true) => k.fp += 1,
            (true, false) => k.fn_ += 1,
            (false, false) => k.tn += 1,
        }
    }
    k.f1()
}

fn cost(f1: Option<f64>) -> f64 {
    f1.map(|f| 1.0 - f).unwrap_or(f64::INFINITY)
}

/// 1 - F1 of `target` on `eval` for a one-vs-rest model trained on `train`
/// under `mask`. Empty masks and undefined F1 cost infinity.
pub fn fitness(
    mask: &[bool],
    train: &FeatureMatrix,
    eval: &FeatureMatrix,
    target: SeizureType,
    density: &str,
) -> Result<f64, BgwoError> {
    if !train.same_registry(eval) {
        return Err(BgwoError::RegistryMismatch);
    }
    if !train.rows().iter().any(|r| r.label == target) {
        return Err(BgwoError::MissingTarget(target));
    }
    if !mask.iter().any(|&m| m) {
        return Ok(f64::INFINITY);
    }
    let model = nbayes::train_one_vs_rest(train, mask, target, density)?;
    let truth: Vec<usize> = eval.rows().iter().map(|r| usize::from(r.label != target)).collect();
    let pred = eval
        .rows()
        .iter()
        .map(|r| Ok(usize::from(model.predict_row(&r.values)? != ClassLabel::Seizure(target))))
        .collect::<Result<Vec<_>, NbError>>()?;
    Ok(cost(target_f1(&truth, &pred)))
}

/// Precomputed scorer giving the same values as [`fitness`] for every mask.
pub struct FitnessTable {
    table: DensityTable,
    truth: Vec<usize>,
}

impl FitnessTable {
    pub fn new(train: &FeatureMatrix, eval: &FeatureMatrix, target: SeizureType, density: &str) -> Result<Self, BgwoError> {
        if !train.same_registry(eval) {
            return Err(BgwoError::RegistryMismatch);
        }
        if !train.rows().iter().any(|r| r.label == target) {
            return Err(BgwoError::MissingTarget(target));
        }
        let rows: Vec<&[f64]> = train.rows().iter().map(|r| r.values.as_slice()).collect();
        let targets: Vec<usize> = train.rows().iter().map(|r| usize::from(r.label != target)).collect();
        if !targets.contains(&1) {
            return Err(NbError::EmptyClass(ClassLabel::Rest).into());
        }
        let eval_rows: Vec<&[f64]> = eval.rows().iter().map(|r| r.values.as_slice()).collect();
        let table = DensityTable::build(&rows, &targets, 2, &eval_rows, density)?;
        let truth = eval.rows().iter().map(|r| usize::from(r.label != target)).collect();
        Ok(Self { table, truth })
    }

    pub fn cost(&self, mask: &[bool]) -> f64 {
        if !mask.iter().any(|&m| m) {
            return f64::INFINITY;
        }
        cost(target_f1(&self.truth, &self.table.predict(mask)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub mask: Vec<bool>,
    pub fitness: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub stopped_early: bool,
}

/// Runs the pack from initialisation until the plateau test fires or the
/// budget is spent, with any fitness function.
pub fn run<F>(width: usize, cfg: &BgwoConfig, seed: u64, fitness: &F) -> Result<Selection, BgwoError>
where
    F: Fn(&[bool]) -> f64 + Sync,
{
    let mut pack = WolfPack::init(width, cfg, seed, fitness)?;
    let mut stopped_early = false;
    while pack.t < pack.max_iterations {
        if should_stop(&pack, cfg) {
            stopped_early = true;
            break;
        }
        pack = pack.step(cfg, fitness)?;
    }
    let best = pack.best().clone();
    Ok(Selection {
        mask: best.mask,
        fitness: best.fitness,
        trace: pack.best_history,
        iterations: pack.t,
        stopped_early,
    })
}

/// Feature mask for `target` chosen on (`train`, `eval`), scoring masks with
/// the named density model.
pub fn select_features(
    train: &FeatureMatrix,
    eval: &FeatureMatrix,
    target: SeizureType,
    cfg: &BgwoConfig,
    density: &str,
    seed: u64,
) -> Result<Selection, BgwoError> {
    cfg.validate()?;
    let table = FitnessTable::new(train, eval, target, density)?;
    run(train.width(), cfg, seed, &|m: &[bool]| table.cost(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelScheme;
    use crate::features::FeatureVector;
    use rand_distr::{Distribution, Normal};

    fn planted(rows: usize, informative: usize, noise: usize, seed: u64, tag: &str) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let data = (0..rows)
            .map(|i| {
                let label = if i % 2 == 0 { SeizureType::Absence } else { SeizureType::Tonic };
                let shift = if label == SeizureType::Absence { 1.0 } else { -1.0 };
                let values = (0..informative + noise)
                    .map(|j| n.sample(&mut rng) + if j < informative { shift } else { 0.0 })
                    .collect();
                FeatureVector {
                    values,
                    label,
                    source_id: format!("{tag}{i}"),
                    window_index: 0,
                    flags: Default::default(),
                }
            })
            .collect();
        let names = (0..informative + noise).map(|j| format!("f{j}")).collect();
        FeatureMatrix::new(names, data, LabelScheme::SixClass).unwrap()
    }

    #[test]
    fn empty_mask_costs_infinity() {
        let m = planted(20, 2, 2, 1, "a");
        assert_eq!(fitness(&[false; 4], &m, &m, SeizureType::Absence, "kde").unwrap(), f64::INFINITY);
    }

    #[test]
    fn separable_costs_zero() {
        let train = planted(40, 1, 1, 2, "a");
        // move the informative column to well separated clusters
        let spread = |m: FeatureMatrix| {
            let rows = m
                .rows()
                .iter()
                .cloned()
                .map(|mut r| {
                    let side = if r.label == SeizureType::Absence { 10.0 } else { -10.0 };
                    r.values[0] = side + 0.1 * r.values[0];
                    r
                })
                .collect();
            m.derive(rows)
        };
        let (train, eval) = (spread(train), spread(planted(40, 1, 1, 3, "b")));
        let f = fitness(&[true, false], &train, &eval, SeizureType::Absence, "kde").unwrap();
        assert!(f.abs() < 1e-12, "{f}");
    }

    #[test]
    fn table_matches_direct_fitness() {
        let train = planted(60, 3, 5, 4, "a");
        let eval = planted(30, 3, 5, 5, "b");
        let table = FitnessTable::new(&train, &eval, SeizureType::Tonic, "kde").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let mask: Vec<bool> = (0..8).map(|_| rng.random_bool(0.4)).collect();
            let direct = fitness(&mask, &train, &eval, SeizureType::Tonic, "kde").unwrap();
            assert_eq!(table.cost(&mask), direct, "{mask:?}");
        }
    }

    #[test]
    fn registry_mismatch() {
        let a = planted(10, 1, 1, 1, "a");
        let b = planted(10, 1, 2, 1, "b");
        assert!(matches!(
            fitness(&[true, true], &a, &b, SeizureType::Absence, "kde"),
            Err(BgwoError::RegistryMismatch)
        ));
    }

    #[test]
    fn plateau_examples() {
        let h = [0.5, 0.4, 0.3, 0.29, 0.29, 0.29, 0.29, 0.29, 0.29];
        assert!(trace_plateaued(&h, 6, 0.05));
        let dec: Vec<f64> = (0..30).map(|i| 2.0 - 0.05 * i as f64).collect();
        assert!(!trace_plateaued(&dec, 6, 0.05));
        assert!(!trace_plateaued(&[0.1; 5], 6, 0.05));
        assert!(trace_plateaued(&[0.1; 6], 6, 0.05));
    }

    #[test]
    fn stop_needs_window_iterations() {
        let cfg = BgwoConfig::default();
        let flat = |x: &[bool]| x.len() as f64 * 0.0 + 0.5;
        let mut pack = WolfPack::init(10, &cfg, 1, &flat).unwrap();
        for t in 0..6 {
            assert!(!should_stop(&pack, &cfg), "fired at t={t}");
            pack = pack.step(&cfg, &flat).unwrap();
        }
        assert!(should_stop(&pack, &cfg));
    }

    #[test]
    fn exhausted_budget() {
        let cfg = BgwoConfig { max_iterations: 2, ..Default::default() };
        let f = |m: &[bool]| m.iter().filter(|&&b| b).count() as f64 / 10.0;
        let pack = WolfPack::init(10, &cfg, 3, &f).unwrap();
        let pack = pack.step(&cfg, &f).unwrap().step(&cfg, &f).unwrap();
        assert!(matches!(pack.step(&cfg, &f), Err(BgwoError::Exhausted(2))));
    }

    #[test]
    fn zero_budget_returns_initial_best() {
        let cfg = BgwoConfig { max_iterations: 0, ..Default::default() };
        let f = |m: &[bool]| 1.0 - m[0] as u8 as f64 * 0.5;
        let s = run(6, &cfg, 5, &f).unwrap();
        assert_eq!(s.iterations, 0);
        assert_eq!(s.trace.len(), 1);
        assert!(s.mask.iter().any(|&b| b));
    }

    #[test]
    fn elitism_keeps_optimum() {
        let cfg = BgwoConfig::default();
        let target: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
        let f = |m: &[bool]| if m == target.as_slice() { 0.0 } else { 0.5 };
        let mut pack = WolfPack::init(12, &cfg, 7, &f).unwrap();
        pack.wolves[3] = Wolf { mask: target.clone(), fitness: 0.0 };
        pack.leaders = select_leaders(&[], &pack.wolves, 0.0);
        let next = pack.step(&cfg, &f).unwrap();
        assert_eq!(next.best().fitness, 0.0);
        assert_eq!(next.best().mask, target);
    }

    #[test]
    fn invariants_and_determinism() {
        let cfg = BgwoConfig { max_iterations: 30, ..Default::default() };
        // cost rewards matching a hidden pattern
        let f = |m: &[bool]| m.iter().enumerate().filter(|(i, &b)| b != (i % 4 == 0)).count() as f64 / 20.0;
        let run_once = || {
            let mut pack = WolfPack::init(20, &cfg, 11, &f).unwrap();
            let mut leaders = Vec::new();
            while pack.t < cfg.max_iterations {
                pack = pack.step(&cfg, &f).unwrap();
                pack.check_invariants(&cfg).unwrap();
                leaders.push(pack.leaders.clone());
            }
            (pack, leaders)
        };
        let (a, la) = run_once();
        let (b, lb) = run_once();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(a.best().fitness < a.best_history[0]);
    }

    #[test]
    fn identical_noise_columns_terminate() {
        let mut m = planted(40, 0, 6, 12, "a");
        let rows = m
            .rows()
            .iter()
            .cloned()
            .map(|mut r| {
                let v = r.values[0];
                r.values.iter_mut().for_each(|x| *x = v);
                r
            })
            .collect();
        m = m.derive(rows);
        let (train, eval) = crate::dataset::hash_split(&m, 70);
        let cfg = BgwoConfig { max_iterations: 20, ..Default::default() };
        let s = select_features(&train, &eval, SeizureType::Absence, &cfg, "kde", 1).unwrap();
        assert!(s.mask.iter().any(|&b| b));
    }
}
