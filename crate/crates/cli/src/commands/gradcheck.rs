use crate::error::{CliError, CliResult};
use crate::output::Output;
use egonce_core::egonce::{random_batch, EgoNce, RandomBatchSpec, DEFAULT_TAU};
use egonce_core::gradcheck::{compare, GradCheck, DEFAULT_STEP};
use egonce_core::trainer::{
    generate_synthetic_corpus, loss_and_gradients, numeric_param_gradient, seeded_stream, BatchSampler, DualHeads,
    Objective, StepConfig, SyntheticCorpusSpec, TransferHead,
};
use egonce_core::Matrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

pub const TOLERANCE: f64 = 1e-4;

pub struct GradcheckArgs {
    pub trials: usize,
    /// Corrupts the first analytic entry of every check.
    pub inject_bug: bool,
}

struct Suite {
    name: &'static str,
    worst: Option<(usize, GradCheck)>,
    checks: usize,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Self { name, worst: None, checks: 0 }
    }

    fn record(&mut self, trial: usize, mut analytic: Vec<f64>, numeric: &[f64], inject_bug: bool) {
        if inject_bug {
            analytic[0] = analytic[0] * 2.0 + 1.0;
        }
        let c = compare(&analytic, numeric);
        self.checks += 1;
        if self.worst.as_ref().is_none_or(|(_, w)| c.max_relative_error > w.max_relative_error) {
            self.worst = Some((trial, c));
        }
    }

    fn max_error(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |(_, w)| w.max_relative_error)
    }

    fn to_json(&self) -> Value {
        let worst = self.worst.as_ref().map(|(trial, w)| {
            json!({
                "trial": trial,
                "index": w.worst_index,
                "analytic": w.analytic,
                "numeric": w.numeric,
                "relative_error": w.max_relative_error,
                "entries": w.entries,
            })
        });
        json!({
            "suite": self.name,
            "checks": self.checks,
            "max_relative_error": self.max_error(),
            "passed": self.max_error() < TOLERANCE,
            "worst": worst,
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).expect("sized")
}

fn loss_suite(seed: u64, trials: usize, bug: bool) -> CliResult<Suite> {
    let mut suite = Suite::new("egonce_loss");
    let mut rng = seeded_stream(seed, 10);
    for trial in 0..trials {
        let spec = RandomBatchSpec {
            batch_size: rng.random_range(1..=8),
            dim: rng.random_range(2..=16),
            partner_probability: 0.5,
            ..Default::default()
        };
        let batch = random_batch(&mut rng, &spec);
        let mask = batch.positive_mask();
        let loss = EgoNce::new(DEFAULT_TAU);
        let analytic = loss.total(&batch, &mask)?.grad.flatten(&batch.augmented_rows());
        let numeric = loss.numeric_gradient(&batch, &mask, DEFAULT_STEP)?;
        suite.record(trial, analytic, &numeric, bug);
    }
    Ok(suite)
}

fn head_suite(seed: u64, trials: usize, objective: Objective, bug: bool) -> CliResult<Suite> {
    let name = match objective {
        Objective::Egonce => "projection_heads_egonce",
        Objective::Infonce => "projection_heads_infonce",
    };
    let mut suite = Suite::new(name);
    let mut rng = seeded_stream(seed, 11);
    let cfg = StepConfig { objective, ..Default::default() };
    for trial in 0..trials {
        let spec = SyntheticCorpusSpec {
            num_videos: 2,
            clips_per_video: 4,
            noun_cluster_count: 2,
            verb_cluster_count: 2,
            feature_dim: 4,
            noise: 1.0,
            seed: rng.random(),
            ..Default::default()
        };
        let corpus = generate_synthetic_corpus(&spec)?.corpus;
        let sampler = BatchSampler::new(&corpus, 60.0)?;
        let mut idx: Vec<usize> = (0..corpus.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(rng.random_range(2..=4));
        let batch = sampler.batch(&idx, (objective == Objective::Egonce).then_some(&mut rng))?;
        let heads = DualHeads::random(&mut rng, 4, 4, 3);
        let (_, g) = loss_and_gradients(&heads, &batch, &cfg)?;
        let numeric = numeric_param_gradient(&heads, &batch, &cfg, DEFAULT_STEP)?;
        suite.record(trial, g.flatten(), &numeric, bug);
    }
    Ok(suite)
}

fn transfer_suite(seed: u64, trials: usize, classes: usize, bug: bool) -> CliResult<Suite> {
    let mut suite = Suite::new(if classes == 2 { "transfer_c2" } else { "transfer_c16" });
    let mut rng = seeded_stream(seed, 12 + classes as u64);
    for trial in 0..trials {
        let (n, d) = (rng.random_range(1..=8), rng.random_range(1..=6));
        let head = TransferHead::random(&mut rng, d, classes, 0.5);
        let x = gaussian(&mut rng, n, d);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let (_, g) = head.cross_entropy(&x, &labels)?;
        let numeric = head.numeric_gradient(&x, &labels, DEFAULT_STEP)?;
        suite.record(trial, g.flatten(), &numeric, bug);
    }
    Ok(suite)
}

pub fn run(args: &GradcheckArgs, seed: u64, out: &Output) -> CliResult<()> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let bug = args.inject_bug;
    let suites = [
        loss_suite(seed, args.trials, bug)?,
        head_suite(seed, args.trials, Objective::Egonce, bug)?,
        head_suite(seed, args.trials, Objective::Infonce, bug)?,
        transfer_suite(seed, args.trials, 2, bug)?,
        transfer_suite(seed, args.trials, 16, bug)?,
    ];
    let worst = suites
        .iter()
        .max_by(|a, b| a.max_error().total_cmp(&b.max_error()))
        .expect("non-empty");
    let passed = worst.max_error() < TOLERANCE;
    let report = json!({
        "seed": seed,
        "trials": args.trials,
        "step": DEFAULT_STEP,
        "tolerance": TOLERANCE,
        "injected_bug": bug,
        "passed": passed,
        "max_relative_error": worst.max_error(),
        "suites": suites.iter().map(Suite::to_json).collect::<Vec<_>>(),
    });
    out.report("gradcheck.json", &report)?;
    if passed {
        return Ok(());
    }
    let (trial, w) = worst.worst.as_ref().expect("a failing suite has a worst entry");
    Err(CliError::GradCheck(format!(
        "suite {} trial {trial} entry {}: analytic {:e}, numeric {:e}, relative error {:e} >= {TOLERANCE:e}",
        worst.name, w.worst_index, w.analytic, w.numeric, w.max_relative_error
    )))
}
