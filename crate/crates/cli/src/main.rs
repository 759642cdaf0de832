use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use venndec_core::assemblies::AssociationGraph;
use venndec_core::decomp::{self, FactorMatrix, GroupingScheme, EIGEN_TOL};
use venndec_core::echelon::{self, BranchingSpec, SubspaceBasis};
use venndec_core::experiment::{self, ExperimentConfig, GraphSpec};
use venndec_core::perturb::{self, rng_from_seed, MembershipMatrix, PerturbationModel, Sampler};
use venndec_core::venn::{self, MeasurementTensor, ReconstructOptions, SplitMode, VennDiagram};
use venndec_core::{EchelonTree64, Tensor64};

#[derive(Parser)]
#[command(name = "venndec", version, about = "Venn diagram reconstruction from intersection sizes")]
struct Cli {
    /// Seed for every randomized step (default 0); overrides the seed in
    /// an experiment config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random inputs.
    #[command(subcommand)]
    Gen(Gen),
    /// Perturb a membership matrix, or check a model's nondeterminism.
    Perturb(PerturbArgs),
    /// Intersection-size tensor of a Venn diagram.
    Tensorize(TensorizeArgs),
    /// Rank-m decomposition of a tensor.
    Decompose(DecomposeArgs),
    /// Condition diagnostics for a factor matrix.
    Condition(ConditionArgs),
    /// Recover a Venn diagram from a measurement tensor.
    Reconstruct(ReconstructArgs),
    /// Compare two Venn diagrams; exits 2 unless they match.
    Diff(DiffArgs),
    /// Build, verify and apply echelon trees.
    #[command(subcommand)]
    Echelon(Echelon),
    /// Run a Monte Carlo experiment from --config.
    Experiment,
}

#[derive(Subcommand)]
enum Gen {
    /// Random diagram: regions start in every set and each membership flips
    /// with probability q.
    Diagram {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        weight_min: f64,
        #[arg(long, default_value_t = 1.0)]
        weight_max: f64,
    },
    /// Association graph in experiment-config form.
    Graph {
        #[arg(long, value_enum)]
        kind: GraphKind,
        #[arg(long)]
        vertices: usize,
        /// Edge probability for random graphs.
        #[arg(long, default_value_t = 0.3)]
        p: f64,
        /// Degree cap for random graphs.
        #[arg(long, default_value_t = 12)]
        max_degree: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Cycle,
    Edgeless,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Bitflip,
    Gaussian,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Bitflip)]
    model: ModelKind,
    /// Flip probability for the bit-flip model.
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Scale for the Gaussian model.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
}

impl ModelArgs {
    fn model(&self) -> PerturbationModel {
        match self.model {
            ModelKind::Bitflip => PerturbationModel::BitFlip { q: self.q },
            ModelKind::Gaussian => PerturbationModel::Gaussian { rho: self.rho },
        }
    }
}

#[derive(Args)]
struct PerturbArgs {
    /// Membership matrix (JSON).
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Instead of perturbing, estimate interval hit rates over this many
    /// samples and compare with the model's (δ, p); exits 2 on failure.
    #[arg(long)]
    check: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Claimed hit probability to test instead of the model's own.
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Args)]
struct TensorizeArgs {
    /// Venn diagram (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    order: usize,
    /// Entrywise uniform noise bound.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Halves,
    EqualThirds,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Tensor (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    rank: usize,
    /// Mode grouping for orders above 3.
    #[arg(long, value_enum, default_value_t = Scheme::Halves)]
    scheme: Scheme,
    #[arg(long, default_value_t = EIGEN_TOL)]
    tol: f64,
}

#[derive(Args)]
struct ConditionArgs {
    /// Factor matrix A (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Third-mode factor matrix C, for τ.
    #[arg(long)]
    c: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Measurement tensor (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long, value_enum, default_value_t = Split::Auto)]
    split: Split,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Auto,
    Disjoint,
    Full,
}

#[derive(Args)]
struct DiffArgs {
    first: PathBuf,
    second: PathBuf,
}

#[derive(Subcommand)]
enum Echelon {
    /// Build a tree for a subspace given by a spanning set, or for a random one.
    Build {
        /// Subspace file `{"dims": [...], "vectors": [[...], ...]}`.
        #[arg(long, conflicts_with = "random_dim")]
        input: Option<PathBuf>,
        /// Build for the orthogonal complement of the input.
        #[arg(long)]
        complement: bool,
        /// Dimension of a random subspace (requires --dims).
        #[arg(long, requires = "dims")]
        random_dim: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Branching factors, one per mode.
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
    },
    /// Check echelon structure; exits 2 on violations.
    Verify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Distance certificate for a rank-one point `χ₁ ⊗ … ⊗ χ_ℓ`.
    Certify {
        #[arg(long)]
        input: PathBuf,
        /// JSON list of the vectors χ₁, …, χ_ℓ.
        #[arg(long)]
        chis: PathBuf,
    },
}

#[derive(Deserialize)]
struct SubspaceFile {
    dims: Vec<usize>,
    vectors: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Certificate {
    certificate: f64,
    largeness: f64,
}

enum Status {
    Ok,
    VerificationFailed,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

struct Output {
    path: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn write_text(&self, text: &str) -> Result<()> {
        match &self.path {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn json<T: Serialize>(&self, value: &T) -> Result<()> {
        if self.format == Format::Csv {
            bail!("csv output is only available for experiment reports");
        }
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(&text)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::VerificationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Status> {
    let out = Output {
        path: cli.out,
        format: cli.format,
    };
    if cli.config.is_some() && !matches!(cli.command, Command::Experiment) {
        bail!("--config is only used by the experiment subcommand");
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Gen(g) => generate(g, seed, &out),
        Command::Perturb(a) => perturb_cmd(a, seed, &out),
        Command::Tensorize(a) => {
            let v: VennDiagram = read_json(&a.input)?;
            let t = venn::intersection_tensor(&v, a.order)?;
            out.json(&venn::add_measurement_noise(&t, a.epsilon, seed)?)?;
            Ok(Status::Ok)
        }
        Command::Decompose(a) => decompose_cmd(a, seed, &out),
        Command::Condition(a) => {
            let fa: FactorMatrix<f64> = read_json(&a.input)?;
            let fc: Option<FactorMatrix<f64>> = a.c.as_deref().map(read_json).transpose()?;
            out.json(&decomp::condition_report(&fa, fc.as_ref())?)?;
            Ok(Status::Ok)
        }
        Command::Reconstruct(a) => {
            let t: MeasurementTensor = read_json(&a.input)?;
            let opts = ReconstructOptions {
                m_max: a.m_max,
                split: match a.split {
                    Split::Auto => SplitMode::Auto,
                    Split::Disjoint => SplitMode::Disjoint,
                    Split::Full => SplitMode::Full,
                },
                ..ReconstructOptions::default()
            };
            let r = venn::reconstruct(&t, &opts, seed)?;
            eprintln!("rank {}, {:?} split, residual {:e}", r.rank, r.split, r.residual);
            out.json(&r.diagram)?;
            Ok(Status::Ok)
        }
        Command::Diff(a) => {
            let v1: VennDiagram = read_json(&a.first)?;
            let v2: VennDiagram = read_json(&a.second)?;
            let d = venn::diagram_diff(&v1, &v2)?;
            out.json(&d)?;
            Ok(if d.exact_match { Status::Ok } else { Status::VerificationFailed })
        }
        Command::Echelon(e) => echelon_cmd(e, seed, &out),
        Command::Experiment => {
            let path = cli.config.context("experiment requires --config <json>")?;
            let mut cfg: ExperimentConfig = read_json(&path)?;
            if let Some(s) = cli.seed {
                cfg.set_seed(s);
            }
            let report = experiment::run(&cfg)?;
            match out.format {
                Format::Json => out.json(&report)?,
                Format::Csv => out.write_text(&report.to_csv())?,
            }
            Ok(if report.summary.within_bound == Some(false) {
                Status::VerificationFailed
            } else {
                Status::Ok
            })
        }
    }
}

fn generate(g: Gen, seed: u64, out: &Output) -> Result<Status> {
    match g {
        Gen::Diagram {
            n,
            m,
            q,
            weight_min,
            weight_max,
        } => {
            if !(0.0 < weight_min && weight_min <= weight_max && weight_max.is_finite()) {
                bail!("weights need 0 < weight_min ≤ weight_max");
            }
            let base = MembershipMatrix::constant(n, m, 1.0);
            let x = perturb::perturb_memberships(&base, &PerturbationModel::BitFlip { q }, seed)?;
            let mut rng = rng_from_seed(perturb::derive_seed(seed, 1));
            let weights: Vec<f64> = (0..m).map(|_| rng.random_range(weight_min..=weight_max)).collect();
            out.json(&VennDiagram::from_memberships(&x, &weights)?)?;
        }
        Gen::Graph {
            kind,
            vertices,
            p,
            max_degree,
        } => {
            let g = match kind {
                GraphKind::Cycle => AssociationGraph::cycle(vertices)?,
                GraphKind::Edgeless => AssociationGraph::edgeless(vertices),
                GraphKind::Random => {
                    if !(0.0..=1.0).contains(&p) {
                        bail!("edge probability {p} outside [0, 1]");
                    }
                    AssociationGraph::random(vertices, p, max_degree, &mut rng_from_seed(seed))
                }
            };
            out.json(&GraphSpec::Edges {
                vertices,
                edges: g.edges().iter().map(|&(u, v)| (u + 1, v + 1)).collect(),
            })?;
        }
    }
    Ok(Status::Ok)
}

fn perturb_cmd(a: PerturbArgs, seed: u64, out: &Output) -> Result<Status> {
    let x0: MembershipMatrix = read_json(&a.input)?;
    let model = a.model.model();
    match a.check {
        None => {
            out.json(&perturb::perturb_memberships(&x0, &model, seed)?)?;
            Ok(Status::Ok)
        }
        Some(trials) => {
            let params = perturb::nondet_params(&model, x0.n(), a.delta)?;
            let sampler = Sampler::Model { model, x0 };
            let p = a.p.unwrap_or(params.p);
            let report = perturb::empirical_nondet_check(&sampler, params.delta, p, trials, seed)?;
            out.json(&report)?;
            Ok(if report.pass { Status::Ok } else { Status::VerificationFailed })
        }
    }
}

fn decompose_cmd(a: DecomposeArgs, seed: u64, out: &Output) -> Result<Status> {
    let t: Tensor64 = read_json(&a.input)?;
    if t.order() == 3 {
        let r = decomp::jennrich(&t, a.rank, seed, a.tol)?;
        eprintln!("residual {:e}", r.residual);
        out.json(&r.terms)?;
    } else {
        let scheme = match a.scheme {
            Scheme::Halves => GroupingScheme::Halves,
            Scheme::EqualThirds => GroupingScheme::EqualThirds,
        };
        let terms = decomp::recover_rank_one_terms(&t, a.rank, scheme, seed, a.tol)?;
        out.json(&terms)?;
    }
    Ok(Status::Ok)
}

fn echelon_cmd(e: Echelon, seed: u64, out: &Output) -> Result<Status> {
    match e {
        Echelon::Build {
            input,
            complement,
            random_dim,
            dims,
            alphas,
        } => {
            let given = match (input, random_dim) {
                (Some(path), _) => {
                    let f: SubspaceFile = read_json(&path)?;
                    SubspaceBasis::from_spanning(f.dims, &f.vectors)?
                }
                (None, Some(dim)) => {
                    let dims = dims.context("--random-dim requires --dims")?;
                    SubspaceBasis::random(dims, dim, &mut rng_from_seed(seed))?
                }
                (None, None) => bail!("echelon build needs --input or --random-dim"),
            };
            let w = if complement {
                echelon::orthogonal_complement(&given)?
            } else {
                given
            };
            let (tree, trace) = echelon::build_echelon_tree(&w, &BranchingSpec::new(alphas))?;
            eprintln!(
                "{} leaves, {} growth steps, level sizes {:?}",
                tree.num_leaves(),
                trace.steps.len(),
                tree.tree().level_counts()
            );
            out.json(&tree)?;
            Ok(Status::Ok)
        }
        Echelon::Verify { input, tol } => {
            let tree: EchelonTree64 = read_json(&input)?;
            let report = echelon::verify_echelon(&tree, tol);
            out.json(&report)?;
            Ok(if report.ok { Status::Ok } else { Status::VerificationFailed })
        }
        Echelon::Certify { input, chis } => {
            let tree: EchelonTree64 = read_json(&input)?;
            let chis: Vec<Vec<f64>> = read_json(&chis)?;
            out.json(&Certificate {
                certificate: echelon::certify_distance(&tree, &chis)?,
                largeness: echelon::largeness(&tree)?,
            })?;
            Ok(Status::Ok)
        }
    }
}
