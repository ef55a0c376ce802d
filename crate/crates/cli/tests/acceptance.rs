//! Acceptance suite: runs every experiment from its shipped config and grades
//! the twelve criteria, one line each.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chaoskit::{run, ExperimentConfig, ExperimentKind, Summary};

struct Timed {
    summary: Summary,
    cfg: ExperimentConfig,
    elapsed: Duration,
}

struct Verdict {
    id: usize,
    title: &'static str,
    pass: bool,
    notes: Vec<String>,
}

impl Verdict {
    fn new(id: usize, title: &'static str) -> Self {
        Self { id, title, pass: true, notes: Vec::new() }
    }

    fn require(&mut self, ok: bool, note: impl Into<String>) {
        let note = note.into();
        if !ok {
            self.pass = false;
            self.notes.push(format!("FAILED {note}"));
        } else {
            self.notes.push(note);
        }
    }

    /// Every check whose name starts with `prefix` passed, and there was one.
    fn group(&mut self, t: &Timed, prefix: &str) {
        let matching: Vec<_> = t.summary.checks.iter().filter(|c| c.name.starts_with(prefix)).collect();
        if matching.is_empty() {
            self.require(false, format!("no '{prefix}' checks"));
            return;
        }
        for c in matching.iter().filter(|c| !c.pass) {
            self.require(false, format!("{} = {} (threshold {})", c.name, c.value, c.threshold));
        }
        let lo = matching.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
        let hi = matching.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max);
        self.notes.push(format!("{} x {prefix}* in [{lo:.3e}, {hi:.3e}]", matching.len()));
    }

    fn budget(&mut self, elapsed: Duration, limit: Duration) {
        self.require(elapsed < limit, format!("{:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs()));
    }
}

fn config_path(kind: ExperimentKind) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{}.cfg", kind.name()))
}

fn run_into(kind: ExperimentKind, out: &Path) -> Result<Timed, String> {
    let path = config_path(kind);
    let mut cfg = ExperimentConfig::from_file(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    cfg.output_dir = out.join(kind.name());
    let start = Instant::now();
    let summary = run(&cfg).map_err(|e| format!("{}: {e}", kind.name()))?;
    Ok(Timed { summary, cfg, elapsed: start.elapsed() })
}

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            let p = e.path();
            if p.extension().is_some_and(|x| x == "csv") {
                let name = p.file_name().unwrap().to_string_lossy().into_owned();
                files.insert(name, fs::read(&p).unwrap_or_default());
            }
        }
    }
    files
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn grade(runs: &BTreeMap<&'static str, Timed>, rerun_dir: &Path, first_dir: &Path) -> Vec<Verdict> {
    let get = |k: ExperimentKind| &runs[k.name()];
    let mut out = Vec::new();

    let t = get(ExperimentKind::TraceAudit);
    let mut v = Verdict::new(1, "trace superadditivity");
    v.require(t.cfg.audit.trials == 1000 && t.cfg.audit.d_max == 3 && t.cfg.audit.n_max == 4, "1000 trials, d <= 3, N <= 4");
    v.group(t, "trace.violations");
    v.group(t, "trace.block_diagonal_equality");
    v.budget(t.elapsed, secs(10));
    out.push(v);

    // both audits come from one run, so each budget is charged the whole run
    let t = get(ExperimentKind::SuperadditivityAudit);
    let mut v = Verdict::new(2, "marginal superadditivity");
    v.require(t.cfg.audit.pairs == 200 && t.cfg.audit.n_max <= 4 && t.cfg.audit.atoms_max <= 5, "200 pairs, N <= 4, <= 5 atoms");
    v.group(t, "marginal.violations");
    v.budget(t.elapsed, secs(60));
    out.push(v);
    let mut v = Verdict::new(3, "tensorization");
    v.require(t.cfg.audit.tensor_pairs == 50 && t.cfg.audit.tensor_n_max <= 3, "50 pairs, N <= 3");
    v.group(t, "tensorization.max_gap");
    v.budget(t.elapsed, secs(30));
    out.push(v);

    // the three limit-equation criteria share one run
    let t = get(ExperimentKind::MomentDecay);
    let m = &t.cfg.model;
    let mut v = Verdict::new(4, "stationary measure");
    v.require(m.a == 0.1 && m.eps == 0.01 && m.dim == 1 && t.cfg.grid.n_cells >= 2048, "(a, eps) = (0.1, 0.01), d = 1, n >= 2048");
    v.require(t.cfg.audit.stationary_horizon >= 10.0, "drift horizon 10");
    v.group(t, "stationary.");
    v.budget(t.elapsed, secs(60));
    out.push(v);
    let mut v = Verdict::new(5, "moment envelope");
    v.require(
        t.cfg.init.m2 == 4.0 && t.cfg.audit.deltas == [0.25, 0.5, 1.0] && t.cfg.audit.margin <= 0.05,
        "m2(0) = 4, delta in {0.25, 0.5, 1}, 5% margin",
    );
    v.group(t, "envelope.");
    v.budget(t.elapsed, secs(60));
    out.push(v);
    let mut v = Verdict::new(6, "free energy decay");
    v.require(t.cfg.audit.fe_steps >= 10_000 && t.cfg.audit.perturbations >= 20, "10^4 steps, 20 perturbations");
    v.group(t, "free_energy.monotone");
    v.group(t, "free_energy.minimizer");
    v.budget(t.elapsed, secs(60));
    out.push(v);

    let t = get(ExperimentKind::Prop23Audit);
    let mut v = Verdict::new(7, "F_N consistency");
    v.require(
        t.cfg.audit.mc_samples >= 1_000_000 && t.cfg.audit.fn_sizes == [2, 8, 64] && t.cfg.audit.fn_eps == [0.05, 0.1],
        "10^6 samples, eps in {0.05, 0.1}, N in {2, 8, 64}",
    );
    v.group(t, "fn.");
    v.group(t, "fn_cross.");
    v.budget(t.elapsed, secs(60));
    out.push(v);

    let w = get(ExperimentKind::WjAudit);
    let mut v = Verdict::new(8, "heat-term sign");
    v.group(w, "heat.");
    out.push(v);
    let mut v = Verdict::new(9, "WJ inequality");
    v.require(w.cfg.audit.perturbations >= 10 && w.cfg.model.dim == 1, ">= 10 perturbations, d = 1");
    v.group(w, "wj.feasible");
    v.group(w, "wj.");
    v.budget(w.elapsed, secs(120));
    out.push(v);

    let t = get(ExperimentKind::UniformInTime);
    let mut v = Verdict::new(10, "uniform-in-time chaos scaling");
    v.require(
        t.cfg.model.dim == 1
            && t.cfg.sim.n_particles == [16, 64, 256]
            && t.cfg.sim.replicas == 64
            && t.cfg.sim.t_end == 50.0,
        "d = 1, N in {16, 64, 256}, 64 replicas, t in [0, 50]",
    );
    v.group(t, "bounded.");
    v.group(t, "ratio.");
    v.group(t, "dt_halving.");
    v.budget(t.elapsed, secs(15 * 60));
    out.push(v);

    let t = get(ExperimentKind::Prop23Audit);
    let mut v = Verdict::new(11, "dissipation chain at N = 2");
    v.require(
        t.cfg.sim.n_particles == [2] && t.cfg.sim.replicas == 512 && t.cfg.sim.t_end == 2.0 && t.cfg.audit.eta == 1.0,
        "N = 2, 512 replicas, t in [0, 2], eta = 1",
    );
    v.group(t, "chain.");
    v.group(t, "tight_at_zero.");
    v.budget(t.elapsed, secs(5 * 60));
    out.push(v);

    let mut v = Verdict::new(12, "determinism");
    let mut compared = 0;
    for kind in ExperimentKind::ALL {
        let a = csv_bytes(&first_dir.join(kind.name()));
        let b = csv_bytes(&rerun_dir.join(kind.name()));
        if a.is_empty() {
            v.require(false, format!("{} wrote no CSV", kind.name()));
        }
        for (name, bytes) in &a {
            compared += 1;
            if b.get(name) != Some(bytes) {
                v.require(false, format!("{}/{name} differs", kind.name()));
            }
        }
        if a.len() != b.len() {
            v.require(false, format!("{} file sets differ", kind.name()));
        }
    }
    v.notes.push(format!("{compared} CSV files compared"));
    out.push(v);
    out
}

fn main() -> ExitCode {
    let first = tempfile::tempdir().expect("temporary directory");
    let second = tempfile::tempdir().expect("temporary directory");
    let mut runs = BTreeMap::new();
    for kind in ExperimentKind::ALL {
        match run_into(kind, first.path()) {
            Ok(t) => {
                println!("ran {} in {:.1}s ({})", kind.name(), t.elapsed.as_secs_f64(), if t.summary.pass { "pass" } else { "FAIL" });
                for c in t.summary.failed() {
                    println!("  failed check {}: {} (threshold {})", c.name, c.value, c.threshold);
                }
                runs.insert(kind.name(), t);
            }
            Err(e) => {
                println!("error: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    for kind in ExperimentKind::ALL {
        if let Err(e) = run_into(kind, second.path()) {
            println!("error: {e}");
            return ExitCode::FAILURE;
        }
    }

    let verdicts = grade(&runs, second.path(), first.path());
    let mut all = true;
    for v in &verdicts {
        all &= v.pass;
        println!(
            "criterion {:>2}: {} {} [{}]",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.title,
            v.notes.join("; ")
        );
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria passed", verdicts.len());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
