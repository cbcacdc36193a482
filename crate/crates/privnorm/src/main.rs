use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use privnorm::error::{Error, Result};
use privnorm::norms::NormSpec;
use privnorm::oracle::FrequencyVector;
use privnorm::params::{derive, Constants, PublicParams};
use privnorm::pipeline::{evaluate_release, Pipeline};
use privnorm::privacy::{histogram_ratio_audit, NoiseSource};
use privnorm::release::ReleaseSet;
use privnorm::stream::{gen_planted, gen_uniform, gen_zipf, Stream};

#[derive(Parser)]
#[command(name = "privnorm", about = "private release of symmetric-norm statistics", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Stream file (header "n=<universe> m=<length>", one item per line).
    #[arg(long)]
    stream: PathBuf,
    /// key=value config file with n, m, alpha, epsilon, delta, M and knobs.
    #[arg(long)]
    config: PathBuf,
    /// Omitted: drawn from OS entropy and printed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the derived number of independent instances.
    #[arg(long)]
    instances: Option<u32>,
    /// Replace all noise with zero (diagnostic only; the output is NOT private).
    #[arg(long)]
    pin_noise: bool,
    /// Force every level's witness substream to 0 (diagnostic only).
    #[arg(long)]
    j0: bool,
    /// Constant overrides, "c_xi=0.8,c_s=0.5".
    #[arg(long)]
    constants: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stream file.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        /// uniform | zipf:<theta> | planted:<count>:<weight>
        #[arg(long, default_value = "uniform")]
        dist: String,
        /// Omitted: drawn from OS entropy and printed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// One pass over a stream producing the private release.
    Sketch {
        #[command(flatten)]
        run: RunArgs,
        /// Release output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional budget-ledger output path (TSV).
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Evaluate a symmetric norm on a previously produced release.
    Query {
        #[arg(long)]
        release: PathBuf,
        /// lp:<p> or topk:<k>.
        #[arg(long)]
        norm: String,
        #[arg(long)]
        constants: Option<String>,
    },
    /// Exact (non-private) norm of a stream, for comparison.
    Exact {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        norm: String,
    },
    /// End-to-end: sketch a stream, query the release, report relative error.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        norm: String,
    },
    /// Empirical two-run privacy audit of the released level sizes.
    Audit {
        #[command(flatten)]
        run: RunArgs,
        /// Release samples per side.
        #[arg(long, default_value_t = 2000)]
        samples: u64,
    },
}

fn read_stream(path: &PathBuf) -> Result<Stream> {
    let mut r = BufReader::new(File::open(path)?);
    Stream::read_from(&mut r)
}

fn read_config(path: &PathBuf, overrides: &Option<String>) -> Result<PublicParams> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut p = PublicParams::from_config_str(&text)?;
    if let Some(ov) = overrides {
        p.constants.parse_overrides(ov)?;
    }
    Ok(p)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::random();
            println!("seed={s}");
            s
        }
    }
}

fn run_pipeline(run: &RunArgs) -> Result<(ReleaseSet, String, Stream, PublicParams)> {
    let seed = resolve_seed(run.seed);
    let public = read_config(&run.config, &run.constants)?;
    let stream = read_stream(&run.stream)?;
    if stream.n > public.n {
        return Err(Error::InvalidParameter(format!(
            "stream universe {} exceeds configured n {}",
            stream.n, public.n
        )));
    }
    let mut d = derive(&public, seed)?;
    if let Some(r) = run.instances {
        d.set_instances(r)?;
    }
    if run.j0 {
        d.force_witness_zero = true;
    }
    if d.clamped {
        eprintln!("note: some derived thresholds were clamped into (0,1)");
    }
    let mut pipe = Pipeline::new(d, public.constants.clone(), seed)?;
    pipe.ingest_slice(&stream.items)?;
    let noise = if run.pin_noise {
        eprintln!("warning: --pin-noise disables privacy");
        NoiseSource::pinned(seed)
    } else {
        NoiseSource::new(seed)
    };
    let (release, ledger) = pipe.release(&noise)?;
    Ok((release, ledger.to_tsv(), stream, public))
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen { out, n, m, dist, seed } => {
            let seed = resolve_seed(seed);
            let stream = match dist.split(':').collect::<Vec<_>>().as_slice() {
                ["uniform"] => gen_uniform(n, m, seed),
                ["zipf", theta] => {
                    let theta: f64 = theta
                        .parse()
                        .map_err(|_| Error::Usage(format!("bad zipf theta {theta:?}")))?;
                    gen_zipf(n, m, theta, seed)
                }
                ["planted", count, weight] => {
                    let count: u64 = count
                        .parse()
                        .map_err(|_| Error::Usage("bad planted count".into()))?;
                    let weight: u64 = weight
                        .parse()
                        .map_err(|_| Error::Usage("bad planted weight".into()))?;
                    let heavies: Vec<u64> = (0..count).collect();
                    gen_planted(n, m, &heavies, weight, seed)
                }
                _ => return Err(Error::Usage(format!("unknown distribution {dist:?}"))),
            };
            stream.write_to(&mut File::create(&out)?)?;
            println!("wrote {} items to {}", m, out.display());
        }
        Command::Sketch { run, out, ledger } => {
            let (release, ledger_tsv, _, _) = run_pipeline(&run)?;
            File::create(&out)?.write_all(release.to_text().as_bytes())?;
            if let Some(path) = ledger {
                File::create(&path)?.write_all(ledger_tsv.as_bytes())?;
            }
            println!("wrote release ({} instances) to {}", release.instances.len(), out.display());
        }
        Command::Query { release, norm, constants } => {
            let mut text = String::new();
            File::open(&release)?.read_to_string(&mut text)?;
            let release = ReleaseSet::from_text(&text)?;
            let spec = NormSpec::parse(&norm)?;
            let mut consts = Constants::default();
            if let Some(ov) = &constants {
                consts.parse_overrides(ov)?;
            }
            let value = evaluate_release(&release, &spec, &consts)?;
            println!(
                "norm={} estimate={value:?} instances={}",
                spec.label(),
                release.instances.len()
            );
        }
        Command::Exact { stream, norm } => {
            let stream = read_stream(&stream)?;
            let spec = NormSpec::parse(&norm)?;
            let f = FrequencyVector::from_updates(stream.items.iter().copied());
            println!("norm={} estimate={:?}", spec.label(), f.norm(&spec, stream.n as usize));
        }
        Command::Eval { run, norm } => {
            let spec = NormSpec::parse(&norm)?;
            let (release, _, stream, public) = run_pipeline(&run)?;
            let got = evaluate_release(&release, &spec, &public.constants)?;
            let f = FrequencyVector::from_updates(stream.items.iter().copied());
            let want = f.norm(&spec, public.n as usize);
            let rel = if want > 0.0 { (got - want).abs() / want } else { f64::NAN };
            println!("norm\texact\tprivate\trel_err");
            println!("{}\t{want:?}\t{got:?}\t{rel:?}", spec.label());
        }
        Command::Audit { run, samples } => {
            let seed = resolve_seed(run.seed);
            let public = read_config(&run.config, &run.constants)?;
            let stream = read_stream(&run.stream)?;
            // neighbor: drop the last update
            let mut neighbor = stream.clone();
            neighbor
                .items
                .pop()
                .ok_or_else(|| Error::Usage("audit needs a non-empty stream".into()))?;
            let d = derive(&public, seed)?;
            let mut pipe_a = Pipeline::new(d.clone(), public.constants.clone(), seed)?;
            pipe_a.ingest_slice(&stream.items)?;
            let mut pipe_b = Pipeline::new(d, public.constants.clone(), seed)?;
            pipe_b.ingest_slice(&neighbor.items)?;
            let (_, ledger) = pipe_a.release(&NoiseSource::new(seed))?;
            print!("{}", ledger.to_tsv());
            // scalar under audit: the first released level size of instance 0
            let mut a = Vec::new();
            let mut b = Vec::new();
            for i in 0..samples {
                let noise = NoiseSource::new(seed.wrapping_add(1).wrapping_mul(i + 1));
                let (ra, _) = pipe_a.release(&noise)?;
                let (rb, _) = pipe_b.release(&noise)?;
                let pick = |r: &ReleaseSet| {
                    r.instances[0]
                        .levels
                        .iter()
                        .map(|e| e.size)
                        .fold(0.0, |acc: f64, x| acc + x)
                };
                a.push(pick(&ra));
                b.push(pick(&rb));
            }
            let (ok, worst) = histogram_ratio_audit(&a, &b, public.epsilon, 50, 100);
            println!(
                "audit {} (worst ratio {worst:.3}, budget epsilon {})",
                if ok { "PASS" } else { "FAIL" },
                public.epsilon
            );
            if !ok {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = real_main() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
