use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sphmix::markov::{latitude_chain, AsCoupling, IsotropicKernel};
use sphmix::representations::{build_representation, compose, two_stage_sample, verify_representation, Theorem};
use sphmix::specfun::lambda_of_dim;
use sphmix::spherical::{FamilyKind, SpherePoint, SphericalFamily};

const VERIFY_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "sphmix", version, about = "Spherical distributions and their discrete mixture representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Latitude density g(t) of a family on an even grid of [-1, 1].
    Density(Opts),
    /// Mixing weights of a representation.
    Weights(Opts),
    /// Points from a family, or from a representation by two-stage sampling.
    Sample(Opts),
    /// Sup-norm check of a representation identity (exit 3 on failure).
    Verify(Opts),
    /// Latitudes of isotropic random walks started at eta.
    Chain(Opts),
    /// Almost-sure vMF coupling on a rho grid from 0 to --rho.
    AsVmf(Opts),
    /// Composition of two weight sequences of one representation (--rho twice).
    Compose(Opts),
}

#[derive(Args, Clone)]
struct Opts {
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    theorem: Option<String>,
    /// Walk kernel: delta, uniform or any family name.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Vec<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    q: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// "e1" or comma-separated coordinates.
    #[arg(long, default_value = "e1", allow_hyphen_values = true)]
    eta: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Domain(String),
    Verification(String),
    Io(io::Error),
}

impl From<sphmix::Error> for Failure {
    fn from(e: sphmix::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

type Out = BufWriter<Box<dyn Write>>;

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn domain<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Domain(msg.into()))
}

const CIRCLE_FAMILIES: [&str; 4] = ["wc", "wn", "sigma", "turan"];

impl Opts {
    fn rho(&self) -> Result<f64, Failure> {
        match self.rho.as_slice() {
            [r] => Ok(*r),
            [] => domain("--rho is required"),
            _ => domain("--rho given more than once"),
        }
    }

    fn theorem(&self) -> Result<Theorem, Failure> {
        let name = self.theorem.as_deref().map_or_else(|| domain("--theorem is required"), Ok)?;
        Theorem::from_name(name).map_or_else(
            || {
                let names: Vec<&str> = Theorem::ALL.iter().map(|t| t.name()).collect();
                domain(format!("unknown theorem '{name}' (expected one of {})", names.join(", ")))
            },
            Ok,
        )
    }

    /// `--t` for the Brownian theorems, `--rho` otherwise.
    fn theorem_param(&self, th: Theorem) -> Result<f64, Failure> {
        if th.is_timed() {
            self.t.map_or_else(|| domain(format!("{} requires --t", th.name())), Ok)
        } else {
            self.rho()
        }
    }

    fn dim_for(&self, circle: bool) -> usize {
        self.d.unwrap_or(if circle { 1 } else { 2 })
    }

    fn eta(&self, d: usize) -> Result<SpherePoint, Failure> {
        if self.eta == "e1" {
            return Ok(SpherePoint::e1(d));
        }
        let coords: Vec<f64> = self
            .eta
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::Domain(format!("cannot parse --eta: {e}")))?;
        if coords.len() != d + 1 {
            return domain(format!("--eta needs {} coordinates for d = {d}, got {}", d + 1, coords.len()));
        }
        let norm = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            eprintln!("warning: --eta has norm {norm}; normalising");
        }
        Ok(SpherePoint::normalized(coords)?)
    }

    fn family_kind(&self, name: &str) -> Result<FamilyKind, Failure> {
        let need = |v: Option<f64>, flag: &str| v.map_or_else(|| domain(format!("{name} requires --{flag}")), Ok);
        Ok(match name {
            "uniform" => FamilyKind::Uniform,
            "sp" => FamilyKind::Sp { p: need(self.p, "p")? },
            "sbeta" => FamilyKind::SBeta { p: need(self.p, "p")?, q: need(self.q, "q")? },
            "vmf" => FamilyKind::Vmf { rho: self.rho()? },
            "watson" => FamilyKind::Watson { rho: self.rho()? },
            "ag" => FamilyKind::Ag { rho: self.rho()? },
            "wc" => FamilyKind::Wc { rho: self.rho()? },
            "wn" => FamilyKind::Wn { rho: self.rho()? },
            "turan" => FamilyKind::Turan { rho: self.rho()? },
            "delta" => FamilyKind::Delta {
                n: self.k.map_or_else(|| domain("delta requires --k"), Ok)?,
                alpha: self.alpha.unwrap_or(1.0),
            },
            "sigma" => FamilyKind::Sigma { n: self.k.map_or_else(|| domain("sigma requires --k"), Ok)? },
            "brownian" => FamilyKind::Brownian { time: need(self.t, "t")? },
            other => return domain(format!("unknown family '{other}'")),
        })
    }

    fn family(&self) -> Result<SphericalFamily, Failure> {
        let name = self.family.as_deref().map_or_else(|| domain("--family is required"), Ok)?;
        let kind = self.family_kind(name)?;
        let d = self.dim_for(CIRCLE_FAMILIES.contains(&name));
        Ok(SphericalFamily::new(kind, self.eta(d)?)?)
    }

    fn theorem_dim(&self, th: Theorem) -> usize {
        let circle = matches!(
            th,
            Theorem::WcDelta | Theorem::WnDelta | Theorem::Vmf1Delta | Theorem::TuranDelta | Theorem::TuranSigma
        );
        self.dim_for(circle)
    }
}

fn header(out: &mut Out, command: &str, o: &Opts) -> io::Result<()> {
    writeln!(out, "# sphmix {command}")?;
    writeln!(out, "# seed={}", o.seed)
}

fn cmd_density(o: &Opts, out: &mut Out) -> Result<(), Failure> {
    let fam = o.family()?;
    let m = o.grid.unwrap_or(201);
    if m < 2 {
        return domain("--grid must be at least 2");
    }
    header(out, "density", o)?;
    writeln!(out, "# family={:?} d={}", fam.kind, fam.d())?;
    writeln!(out, "t,g")?;
    for i in 0..m {
        let t = (-1.0 + 2.0 * i as f64 / (m - 1) as f64).clamp(-1.0, 1.0);
        writeln!(out, "{},{}", fmt(t), fmt(fam.latitude_density(t)))?;
    }
    Ok(())
}

fn cmd_weights(o: &Opts, out: &mut Out) -> Result<(), Failure> {
    let th = o.theorem()?;
    let d = o.theorem_dim(th);
    let x = o.theorem_param(th)?;
    let rep = build_representation(th, &o.eta(d)?, x)?;
    header(out, "weights", o)?;
    writeln!(out, "# theorem={} d={d} param={}", th.name(), fmt(x))?;
    if let Some(w) = rep.weights.warning() {
        writeln!(out, "# warning: {w}")?;
        eprintln!("warning: {w}");
    }
    writeln!(out, "n,w")?;
    let table = rep.weights.table();
    let last = table.iter().rposition(|&w| w != 0.0).unwrap_or(0);
    for (n, w) in table.iter().enumerate().take(last + 1) {
        writeln!(out, "{n},{}", fmt(*w))?;
    }
    writeln!(out, "# truncation={} tail_mass={}", rep.weights.truncation(), fmt(rep.weights.tail_bound()))?;
    Ok(())
}

fn cmd_sample(o: &Opts, out: &mut Out) -> Result<(), Failure> {
    let n = o.n.unwrap_or(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let points: Vec<SpherePoint> = if o.theorem.is_some() {
        let th = o.theorem()?;
        let d = o.theorem_dim(th);
        let rep = build_representation(th, &o.eta(d)?, o.theorem_param(th)?)?;
        header(out, "sample", o)?;
        writeln!(out, "# theorem={} d={d}", th.name())?;
        (0..n).map(|_| two_stage_sample(&rep, &mut rng)).collect::<Result<_, _>>()?
    } else {
        let fam = o.family()?;
        let sampler = fam.sampler();
        header(out, "sample", o)?;
        writeln!(out, "# family={:?} d={}", fam.kind, fam.d())?;
        (0..n).map(|_| sampler.sample(&mut rng)).collect()
    };
    let d = points.first().map_or(0, |p| p.d());
    let cols: Vec<String> = (0..=d).map(|i| format!("x{i}")).collect();
    writeln!(out, "{}", cols.join(","))?;
    for p in points {
        let row: Vec<String> = p.coords().iter().map(|&c| fmt(c)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn cmd_verify(o: &Opts, out: &mut Out) -> Result<(), Failure> {
    let th = o.theorem()?;
    let d = o.theorem_dim(th);
    let x = o.theorem_param(th)?;
    let rep = build_representation(th, &o.eta(d)?, x)?;
    let v = verify_representation(&rep, o.grid.unwrap_or(201));
    header(out, "verify", o)?;
    writeln!(out, "# d={d} tail_mass={} truncation_bound={}", fmt(v.tail_mass), fmt(v.truncation_bound))?;
    writeln!(out, "theorem,rho,sup_error,truncation_N")?;
    writeln!(out, "{},{},{},{}", th.name(), fmt(x), fmt(v.sup_error), v.truncation)?;
    if !v.passes(VERIFY_TOL) {
        return Err(Failure::Verification(format!(
            "{} at {x}: sup error {:e} + truncation bound {:e} exceeds {VERIFY_TOL:e}",
            th.name(),
            v.sup_error,
            v.truncation_bound
        )));
    }
    Ok(())
}

fn cmd_chain(o: &Opts, out: &mut Out) -> Result<(), Failure> {
    let name = o.kernel.as_deref().unwrap_or("delta");
    let d = o.dim_for(CIRCLE_FAMILIES.contains(&name));
    let kernel = match name {
        "delta" => IsotropicKernel::delta(d, o.k.map_or_else(|| domain("delta kernel requires --k"), Ok)?, o.alpha.unwrap_or(1.0))?,
        other => {
            let fam = SphericalFamily::new(o.family_kind(other)?, SpherePoint::e1(d))?;
            IsotropicKernel::new(fam.latitude_law())
        }
    };
    let steps = o.steps.unwrap_or(1);
    let reps = o.n.unwrap_or(1);
    let eta = o.eta(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    header(out, "chain", o)?;
    writeln!(out, "# kernel={:?} d={d} steps={steps}", kernel.step_law)?;
    writeln!(out, "chain,step,latitude")?;
    for c in 0..reps {
        let ys = latitude_chain(&kernel, &eta, steps, &mut rng)?;
        for (s, y) in ys.iter().enumerate() {
            writeln!(out, "{c},{s},{}", fmt(*y))?;
        }
    }
    Ok(())
}

fn cmd_as_vmf(o: &Opts, out: &mut Out) -> Result<(), Failure> {
    let d = o.dim_for(false);
    let rho_max = o.rho()?;
    if !(rho_max >= 0.0) {
        return domain(format!("vMF requires rho >= 0, got {rho_max}"));
    }
    let m = o.grid.unwrap_or(10).max(1);
    let reps = o.n.unwrap_or(1);
    let eta = o.eta(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    header(out, "as-vmf", o)?;
    writeln!(out, "# d={d}")?;
    writeln!(out, "coupling,rho,N_rho,Y,latitude")?;
    for c in 0..reps {
        let mut coupling = AsCoupling::new(eta.clone(), &mut rng)?;
        for i in 0..m {
            let rho = if m == 1 { rho_max } else { rho_max * i as f64 / (m - 1) as f64 };
            let draw = coupling.sample(rho)?;
            writeln!(out, "{c},{},{},{},{}", fmt(rho), draw.n, fmt(draw.y), fmt(eta.dot(&draw.x)))?;
        }
    }
    Ok(())
}

fn cmd_compose(o: &Opts, out: &mut Out) -> Result<(), Failure> {
    let th = o.theorem()?;
    let d = o.theorem_dim(th);
    let params: Vec<f64> = if th.is_timed() {
        return domain("compose takes --rho twice; Brownian weights compose by adding times");
    } else {
        o.rho.clone()
    };
    let [a, b] = params.as_slice() else {
        return domain("compose requires --rho exactly twice");
    };
    let eta = o.eta(d)?;
    let ra = build_representation(th, &eta, *a)?;
    let rb = build_representation(th, &eta, *b)?;
    if !matches!(ra.base, sphmix::representations::Base::Delta) {
        return domain(format!("compose needs an ultraspherical (delta) representation, {} is not", th.name()));
    }
    let c = compose(&ra.weights, &rb.weights, lambda_of_dim(d));
    header(out, "compose", o)?;
    writeln!(out, "# theorem={} d={d} rho={},{}", th.name(), fmt(*a), fmt(*b))?;
    writeln!(out, "n,w")?;
    let table = c.table();
    for (n, w) in table.iter().enumerate() {
        writeln!(out, "{n},{}", fmt(*w))?;
    }
    writeln!(out, "# tail_mass={}", fmt(c.tail_bound()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let opts = match &cli.command {
        Command::Density(o)
        | Command::Weights(o)
        | Command::Sample(o)
        | Command::Verify(o)
        | Command::Chain(o)
        | Command::AsVmf(o)
        | Command::Compose(o) => o.clone(),
    };
    let sink: Box<dyn Write> = match &opts.output {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    let result = match cli.command {
        Command::Density(o) => cmd_density(&o, &mut out),
        Command::Weights(o) => cmd_weights(&o, &mut out),
        Command::Sample(o) => cmd_sample(&o, &mut out),
        Command::Verify(o) => cmd_verify(&o, &mut out),
        Command::Chain(o) => cmd_chain(&o, &mut out),
        Command::AsVmf(o) => cmd_as_vmf(&o, &mut out),
        Command::Compose(o) => cmd_compose(&o, &mut out),
    };
    out.flush()?;
    result
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(1)
        }
    }
}
