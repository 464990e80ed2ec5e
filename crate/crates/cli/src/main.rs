//! `nmx`: validate, convert, query, slice, and version noisy-MAX networks.
//!
//! Exit codes: 0 on success, 1 on domain or I/O errors, 2 on usage errors.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nmx_core::error::Error;
use nmx_core::format::{
    export_expanded, import_frequencies, load_diff, load_network, save_diff, save_network, FrequencyMap,
};
use nmx_core::generate::{gen_random, GeneratorParams};
use nmx_core::model::{Evidence, Network, NodeId};
use nmx_core::subnet::{
    audit_subnetwork, check_hierarchical, extract_view, soundness_audit_with, Engine, MarginalPolicy, Relation,
    Subnetwork, ViewSpec,
};
use nmx_core::versioning::{apply_diff, diff, version_id};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "nmx", version, about = "Noisy-MAX belief-network workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every network invariant and the level hierarchy.
    Validate { net: PathBuf },
    /// Export full conditional probability tables.
    Expand {
        net: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Posterior marginals by variable elimination.
    Infer {
        net: PathBuf,
        /// `node=state`, where state is a name or an index.
        #[arg(short, long, num_args = 1..)]
        evidence: Vec<String>,
        /// Nodes to report; every node when omitted.
        #[arg(short, long, num_args = 1..)]
        query: Vec<String>,
    },
    /// Cut a subnetwork, folding removed parents into leaks.
    Extract {
        net: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, value_enum, default_value_t = Policy::RootPrior)]
        policy: Policy,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compare prior marginals of a subnetwork against its source.
    #[command(group = clap::ArgGroup::new("target").required(true).args(["sub", "seed"]))]
    Audit {
        net: PathBuf,
        /// Previously extracted subnetwork of `net`.
        #[arg(long)]
        sub: Option<PathBuf>,
        #[command(flatten)]
        view: OptionalViewArgs,
        #[arg(long, value_enum, default_value_t = Policy::RootPrior)]
        policy: Policy,
        #[arg(long, value_enum, default_value_t = EngineArg::Enumerate)]
        engine: EngineArg,
        /// Fail when the deviation exceeds this.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Write the diff that turns `a` into `b`.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Apply a diff to the network it was taken against.
    Apply {
        net: PathBuf,
        diff: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Generate a random layered network.
    Gen {
        #[arg(long, default_value = "cpcs-scale")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Build a network from a weighted structure document.
    Import {
        structure: PathBuf,
        /// JSON map from weight 0..5 to probability; a placeholder map otherwise.
        #[arg(long)]
        fmap: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP workbench.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        /// Listen on every interface instead of loopback.
        #[arg(long)]
        open: bool,
        /// Networks to load at startup.
        nets: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ViewArgs {
    #[arg(long, required = true, num_args = 1..)]
    seed: Vec<String>,
    #[arg(long, value_parser = parse_relation)]
    relation: Relation,
    /// Keep only nodes carrying one of these labels.
    #[arg(long, num_args = 1..)]
    labels: Vec<String>,
    #[arg(long)]
    exclude_seeds: bool,
}

#[derive(Debug, Args)]
struct OptionalViewArgs {
    #[arg(long, num_args = 1.., requires = "relation")]
    seed: Vec<String>,
    #[arg(long, value_parser = parse_relation)]
    relation: Option<Relation>,
    #[arg(long, num_args = 1..)]
    labels: Vec<String>,
    #[arg(long)]
    exclude_seeds: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Policy {
    RootPrior,
    Exact,
}

impl From<Policy> for MarginalPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::RootPrior => MarginalPolicy::RootPrior,
            Policy::Exact => MarginalPolicy::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Enumerate,
    Eliminate,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Enumerate => Engine::Enumerate,
            EngineArg::Eliminate => Engine::Eliminate,
        }
    }
}

fn parse_relation(s: &str) -> Result<Relation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn view_spec(seeds: &[String], relation: Relation, labels: &[String], exclude_seeds: bool) -> ViewSpec {
    let mut spec = ViewSpec::new(seeds.iter().map(String::as_str), relation);
    if !labels.is_empty() {
        spec = spec.with_labels(labels.iter().cloned());
    }
    spec.include_seeds = !exclude_seeds;
    spec
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_net(path: &Path) -> Result<Network> {
    load_network(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).unwrap()
}

fn validate(path: &Path) -> Result<()> {
    let net = match load_network(&read(path)?) {
        Ok(net) => net,
        Err(Error::Invalid(report)) => {
            for v in &report.violations {
                eprintln!("{v}");
            }
            bail!("{} violation(s) in {}", report.violations.len(), path.display());
        }
        Err(e) => return Err(e).with_context(|| format!("loading {}", path.display())),
    };
    let hierarchy = check_hierarchical(&net)?;
    println!(
        "{}",
        pretty(&json!({
            "valid": true,
            "version": version_id(&net),
            "nodes": net.len(),
            "arcs": net.arc_count(),
            "roots": net.root_count(),
            "hierarchy": hierarchy,
        }))
    );
    Ok(())
}

fn infer(path: &Path, evidence: &[String], query: &[String]) -> Result<()> {
    let net = read_net(path)?;
    let evidence = Evidence::parse_pairs(&net, evidence)?;
    let query: Option<BTreeSet<NodeId>> =
        (!query.is_empty()).then(|| query.iter().map(|q| NodeId::from(q.as_str())).collect());
    let marginals = nmx_service::posterior(&net, &evidence, query.as_ref())?;
    println!("{}", pretty(&json!({ "version": version_id(&net), "marginals": marginals })));
    Ok(())
}

fn audit(
    path: &Path,
    sub: Option<&Path>,
    view: &OptionalViewArgs,
    policy: MarginalPolicy,
    engine: Engine,
    tolerance: Option<f64>,
) -> Result<()> {
    let net = read_net(path)?;
    let report = match (sub, view.relation) {
        (Some(sub_path), _) => {
            let network = read_net(sub_path)?;
            let Some(prov) = network.provenance() else {
                bail!("{} carries no extraction provenance", sub_path.display());
            };
            let source = version_id(&net);
            if prov.source_version != source {
                return Err(Error::Version { expected: prov.source_version.clone(), found: source }.into());
            }
            audit_subnetwork(&net, &Subnetwork { network }, engine)?
        }
        (None, Some(relation)) => {
            let spec = view_spec(&view.seed, relation, &view.labels, view.exclude_seeds);
            soundness_audit_with(&net, &spec, policy, engine)?
        }
        (None, None) => unreachable!("clap requires --sub or --seed with --relation"),
    };
    println!("{}", pretty(&json!(report)));
    if let Some(tol) = tolerance {
        if report.deviation.is_nan() || report.deviation > tol {
            bail!("deviation {:e} exceeds tolerance {:e}", report.deviation, tol);
        }
    }
    Ok(())
}

async fn serve(port: u16, open: bool, nets: Vec<Network>) -> Result<()> {
    let bench = Arc::new(nmx_service::Workbench::new());
    for net in nets {
        let lineage = bench.insert(net, None);
        eprintln!("loaded {} as {}", lineage.summary().title, lineage.id);
    }
    let listener = tokio::net::TcpListener::bind(nmx_service::bind_address(port, open)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    nmx_service::serve(listener, bench).await?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { net } => validate(&net),
        Command::Expand { net, out } => emit(out.as_deref(), &export_expanded(&read_net(&net)?)?),
        Command::Infer { net, evidence, query } => infer(&net, &evidence, &query),
        Command::Extract { net, view, policy, out } => {
            let source = read_net(&net)?;
            let spec = view_spec(&view.seed, view.relation, &view.labels, view.exclude_seeds);
            let sub = extract_view(&source, &spec, policy.into())?;
            let folded: usize = sub.folds().iter().map(|f| f.folded.len()).sum();
            eprintln!("kept {} of {} nodes, folded {} parent(s)", sub.network.len(), source.len(), folded);
            emit(out.as_deref(), &save_network(&sub.network))
        }
        Command::Audit { net, sub, view, policy, engine, tolerance } => {
            audit(&net, sub.as_deref(), &view, policy.into(), engine.into(), tolerance)
        }
        Command::Diff { a, b, out } => emit(out.as_deref(), &save_diff(&diff(&read_net(&a)?, &read_net(&b)?))),
        Command::Apply { net, diff, out } => {
            let d = load_diff(&read(&diff)?).with_context(|| format!("loading {}", diff.display()))?;
            emit(out.as_deref(), &save_network(&apply_diff(&read_net(&net)?, &d)?))
        }
        Command::Gen { preset, seed, out } => {
            let net = gen_random(&GeneratorParams::preset(&preset, seed)?)?;
            emit(out.as_deref(), &save_network(&net))
        }
        Command::Import { structure, fmap, out } => {
            let fmap = match fmap {
                Some(path) => FrequencyMap::from_json(&read(&path)?)?,
                None => {
                    eprintln!("warning: using the placeholder frequency map");
                    FrequencyMap::default()
                }
            };
            emit(out.as_deref(), &save_network(&import_frequencies(&read(&structure)?, &fmap)?))
        }
        Command::Serve { port, open, nets } => {
            let nets = nets.iter().map(|p| read_net(p)).collect::<Result<Vec<_>>>()?;
            tokio::runtime::Runtime::new()?.block_on(serve(port, open, nets))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
