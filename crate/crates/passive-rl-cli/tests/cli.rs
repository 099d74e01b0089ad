//! End-to-end runs of the `passive-rl` binary: exit codes, artifact shapes,
//! and byte-level determinism.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_passive-rl")
}

fn cycle_fixture() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/two_state_cycle.mdp")
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new() -> Run {
        Run { dir: tempfile::tempdir().expect("temp dir") }
    }

    fn write_config(&self, name: &str, contents: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        fs::write(&path, contents).expect("write config");
        path
    }

    fn out_dir(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn invoke(&self, subcommand: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
        Command::new(binary())
            .arg(subcommand)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(out)
            .args(extra)
            .output()
            .expect("binary runs")
    }
}

fn assert_exit(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(out: &Path, name: &str) -> String {
    fs::read_to_string(out.join(name)).unwrap_or_else(|_| panic!("missing artifact {name}"))
}

/// All files in a directory, keyed by name.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).expect("out dir exists") {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().into_owned();
        files.insert(name, fs::read(entry.path()).unwrap());
    }
    files
}

#[test]
fn solve_on_the_cycle_fixture_writes_three_tables() {
    let run = Run::new();
    let config = run.write_config(
        "solve.cfg",
        &format!("[run]\nseed = 3\n[model]\nfile = {}\n[memory]\nspec = uniform\n", cycle_fixture()),
    );
    let out = run.out_dir("solve");
    let output = run.invoke("solve", &config, &out, &[]);
    assert_exit(&output, 0);

    let report = read(&out, "solve_report.csv");
    assert!(report.starts_with("objective,grad_inf_norm,iterations,converged\n"));
    assert!(report.trim_end().ends_with("true"), "{report}");
    let occupancy = read(&out, "occupancy.csv");
    assert!(occupancy.starts_with("s,a,d\n"));
    assert_eq!(occupancy.lines().count(), 3, "two cells plus header");
    let policy = read(&out, "policy.csv");
    assert!(policy.starts_with("s,a,pi\n"));
    assert!(read(&out, "run_meta.csv").contains("master_seed,3"));
}

#[test]
fn malformed_model_file_exits_one() {
    let run = Run::new();
    let bad_model = run.write_config("broken.mdp", "states 2\nthis is not a row\n");
    let config = run.write_config(
        "solve.cfg",
        &format!("[model]\nfile = {}\n", bad_model.display()),
    );
    let output = run.invoke("solve", &config, &run.out_dir("solve"), &[]);
    assert_exit(&output, 1);
    assert!(!String::from_utf8_lossy(&output.stderr).is_empty());
}

#[test]
fn iteration_starved_solve_exits_two_but_writes_artifacts() {
    let run = Run::new();
    let config = run.write_config(
        "solve.cfg",
        "[model]\nbuiltin = bench_3x2\n[solve]\nmax_iters = 1\ntol = 1e-12\n",
    );
    let out = run.out_dir("solve");
    let output = run.invoke("solve", &config, &out, &[]);
    assert_exit(&output, 2);
    let report = read(&out, "solve_report.csv");
    assert!(report.trim_end().ends_with("false"), "{report}");
    assert!(String::from_utf8_lossy(&output.stderr).contains("did not converge"));
}

#[test]
fn unknown_config_key_exits_one() {
    let run = Run::new();
    let config = run.write_config(
        "solve.cfg",
        "[model]\nbuiltin = bench_2x2\nmystery_knob = 3\n",
    );
    let output = run.invoke("solve", &config, &run.out_dir("solve"), &[]);
    assert_exit(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("mystery_knob"));
}

#[test]
fn online_trace_has_one_row_per_round_and_nondecreasing_cumulative() {
    let run = Run::new();
    let config = run.write_config(
        "online.cfg",
        "[run]\nseed = 11\n[model]\nbuiltin = bench_2x2\n[memory]\nspec = uniform\n\
         [online]\nrounds = 16\nepisodes_per_round = 60\neta = 1.0\n",
    );
    let out = run.out_dir("online");
    let output = run.invoke("online", &config, &out, &[]);
    assert_exit(&output, 0);

    let trace = read(&out, "regret_11.csv");
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "round,gap,cumulative,eta,solver_iters,estimator_error_bound"
    );
    let mut last_cumulative = 0.0;
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6, "{line}");
        let cumulative: f64 = fields[2].parse().unwrap();
        assert!(cumulative >= last_cumulative - 1e-12);
        last_cumulative = cumulative;
        rows += 1;
    }
    assert_eq!(rows, 16);
    assert!(read(&out, "online_summary.csv").lines().count() == 2);
}

#[test]
fn reruns_are_byte_identical_and_seed_flag_changes_them() {
    let run = Run::new();
    let config = run.write_config(
        "online.cfg",
        "[run]\nseed = 5\n[model]\nbuiltin = bench_2x2\n\
         [online]\nrounds = 4\nepisodes_per_round = 40\n",
    );
    let first = run.out_dir("a");
    let second = run.out_dir("b");
    assert_exit(&run.invoke("online", &config, &first, &[]), 0);
    assert_exit(&run.invoke("online", &config, &second, &[]), 0);
    assert_eq!(snapshot(&first), snapshot(&second));

    let overridden = run.out_dir("c");
    assert_exit(&run.invoke("online", &config, &overridden, &["--seed", "6"]), 0);
    let files = snapshot(&overridden);
    assert!(files.contains_key("regret_6.csv"), "seed flag renames the trace");
    assert_ne!(files.get("regret_6.csv"), snapshot(&first).get("regret_5.csv"));
}

#[test]
fn optimal_memory_beats_uniform_memory_on_final_gap() {
    let run = Run::new();
    let base = "[run]\nseed = 2\nseeds = 1,2,3\n[model]\nbuiltin = bench_2x2\n\
                [online]\nrounds = 2\nepisodes_per_round = 200\neta = 1.0\n";
    let mean_final_gap = |spec: &str, name: &str| -> f64 {
        let config = run.write_config(name, &format!("{base}[memory]\nspec = {spec}\n"));
        let out = run.out_dir(name.trim_end_matches(".cfg"));
        assert_exit(&run.invoke("online", &config, &out, &[]), 0);
        let summary = read(&out, "online_summary.csv");
        let gaps: Vec<f64> = summary
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    let optimal = mean_final_gap("optimal", "opt.cfg");
    let uniform = mean_final_gap("uniform", "uni.cfg");
    assert!(
        optimal <= uniform + 1e-9,
        "optimal memory {optimal} vs uniform memory {uniform}"
    );
}

#[test]
fn alpha_sweep_summary_has_one_row_per_value() {
    let run = Run::new();
    let config = run.write_config(
        "sweep.cfg",
        "[run]\nseed = 9\n[model]\nbuiltin = bench_2x2\n\
         [online]\nrounds = 3\nepisodes_per_round = 40\n\
         [sweep]\naxis = memory_alpha\nvalues = 0, 0.5, 1\nseeds = 3\n",
    );
    let out = run.out_dir("sweep");
    assert_exit(&run.invoke("sweep", &config, &out, &[]), 0);

    let summary = read(&out, "sweep_summary.csv");
    assert_eq!(
        summary.lines().next().unwrap(),
        "axis,value,mean_cumulative,ci_half_width,mean_final_gap,n_seeds"
    );
    assert_eq!(summary.lines().count(), 4, "{summary}");
    for idx in 0..3 {
        let point = read(&out, &format!("point_memory_alpha_{idx}.csv"));
        assert_eq!(point.lines().count(), 4, "three seeds plus header");
    }
}

#[test]
fn round_axis_sweep_reports_a_slope_and_respects_thread_cap() {
    let run = Run::new();
    let config = run.write_config(
        "sweep.cfg",
        "[run]\nseed = 14\n[model]\nbuiltin = bench_2x2\n\
         [online]\nepisodes_per_round = 30\n\
         [sweep]\naxis = T\nvalues = 2, 4, 8\nseeds = 2\n",
    );
    let parallel = run.out_dir("par");
    assert_exit(&run.invoke("sweep", &config, &parallel, &[]), 0);
    let summary = read(&parallel, "sweep_summary.csv");
    assert!(summary.lines().next().unwrap().ends_with(",loglog_slope"), "{summary}");

    let serial = run.out_dir("ser");
    let output = Command::new(binary())
        .arg("sweep")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&serial)
        .env("PASSIVE_RL_THREADS", "1")
        .output()
        .expect("binary runs");
    assert_exit(&output, 0);
    assert_eq!(snapshot(&parallel), snapshot(&serial), "thread cap must not change artifacts");
}

#[test]
fn empty_sweep_axis_exits_one() {
    let run = Run::new();
    let config = run.write_config(
        "sweep.cfg",
        "[model]\nbuiltin = bench_2x2\n[online]\n[sweep]\naxis = T\nvalues =\n",
    );
    let output = run.invoke("sweep", &config, &run.out_dir("sweep"), &[]);
    assert_exit(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("values"));

    let config = run.write_config(
        "sweep2.cfg",
        "[model]\nbuiltin = bench_2x2\n[online]\n[sweep]\naxis = widgets\nvalues = 1\n",
    );
    let output = run.invoke("sweep", &config, &run.out_dir("sweep2"), &[]);
    assert_exit(&output, 1);
}

#[test]
fn lowerbound_audit_reports_pair_rows_and_divergence_agreement() {
    let run = Run::new();
    let config = run.write_config(
        "lb.cfg",
        "[run]\nseed = 21\n[pair]\nn_states = 2\nn_actions = 2\ngamma = 0.5\n\
         delta = auto\ncell = adaptive\nlearner = uniform\nn = 25\nrounds = 3\nseeds = 5\n\
         [kl_audit]\npolicies = 10\nhorizon = 3\n",
    );
    let out = run.out_dir("lb");
    assert_exit(&run.invoke("lowerbound", &config, &out, &[]), 0);

    let audit = read(&out, "pair_audit.csv");
    assert_eq!(
        audit.lines().next().unwrap(),
        "seed,R_m,R_m_prime,pair_sum,lower_bound_value,delta"
    );
    assert_eq!(audit.lines().count(), 6);
    for line in audit.lines().skip(1) {
        let fields: Vec<f64> =
            line.split(',').skip(1).map(|f| f.parse().unwrap()).collect();
        let (pair_sum, floor) = (fields[2], fields[3]);
        assert!(pair_sum >= floor - 1e-12, "{line}");
    }

    let kl = read(&out, "kl_audit.csv");
    assert_eq!(kl.lines().next().unwrap(), "policy,history_kl,weighted_kl,abs_diff");
    for line in kl.lines().skip(1) {
        let diff: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(diff <= 1e-9, "{line}");
    }
    assert!(read(&out, "run_meta.csv").contains("cell_choice,LeastVisited"));
}

#[test]
fn identical_pair_has_zero_divergence_rows() {
    let run = Run::new();
    let config = run.write_config(
        "lb.cfg",
        "[pair]\ndelta = 0\ncell = 1,1\nseeds = 2\nrounds = 2\n[kl_audit]\npolicies = 5\nhorizon = 2\n",
    );
    let out = run.out_dir("lb");
    assert_exit(&run.invoke("lowerbound", &config, &out, &[]), 0);
    for line in read(&out, "kl_audit.csv").lines().skip(1) {
        let history: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(history.abs() <= 1e-15, "{line}");
    }
    assert!(read(&out, "run_meta.csv").contains("cell_choice,Static"));
}

#[test]
fn oversized_enumeration_horizon_exits_one() {
    let run = Run::new();
    let config = run.write_config(
        "lb.cfg",
        "[pair]\nseeds = 1\n[kl_audit]\npolicies = 1\nhorizon = 12\n",
    );
    let output = run.invoke("lowerbound", &config, &run.out_dir("lb"), &[]);
    assert_exit(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("too large"));
}

#[test]
fn kernel_report_carries_the_quadrature_constant() {
    let run = Run::new();
    let config = run.write_config(
        "kernel.cfg",
        "[kernel]\nname = epanechnikov\ndim = 1\nbandwidth = 0.1\nholder_const = 20\nn = 1000\ndelta = 0.05\n",
    );
    let out = run.out_dir("kernel");
    assert_exit(&run.invoke("validate-kernel", &config, &out, &[]), 0);
    let report = read(&out, "kernel_report.csv");
    assert_eq!(report.lines().next().unwrap(), "name,dim,beta,c_k,bandwidth,bias_bound,l1_bound");
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "epanechnikov");
    let c_k: f64 = row[3].parse().unwrap();
    assert!((c_k - 0.2).abs() < 1e-6, "{report}");
    let bias: f64 = row[5].parse().unwrap();
    assert!((bias - 20.0 * c_k * 0.01).abs() < 1e-6);

    let config = run.write_config("bad.cfg", "[kernel]\nname = mystery\n");
    let output = run.invoke("validate-kernel", &config, &run.out_dir("bad"), &[]);
    assert_exit(&output, 1);
}

#[test]
fn plugin_estimate_report_carries_the_frozen_radius() {
    let run = Run::new();
    let config = run.write_config(
        "est.cfg",
        "[run]\nseed = 33\n[model]\nbuiltin = bench_2x2\n[estimate]\nkind = plugin\nn = 100\n",
    );
    let out = run.out_dir("est");
    assert_exit(&run.invoke("estimate", &config, &out, &[]), 0);
    let report = read(&out, "estimate_report.csv");
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    let bound: f64 = row[4].parse().unwrap();
    let sup: f64 = row[5].parse().unwrap();
    assert!((bound - 0.041422).abs() < 1e-5, "n=100, four cells, delta 0.05: {report}");
    assert!(sup < 0.15, "loose sanity only; coverage statistics live elsewhere: {report}");
    assert!(read(&out, "estimate.csv").starts_with("s,a,d\n"));
    assert!(read(&out, "exact.csv").starts_with("s,a,d\n"));
}

#[test]
fn kde_estimate_writes_a_grid_with_near_unit_mass() {
    let run = Run::new();
    let config = run.write_config(
        "kde.cfg",
        "[run]\nseed = 8\n[model]\nbuiltin = drift_walk_1d\n\
         [estimate]\nkind = kde\nbandwidth = 0.1\nn = 300\nhorizon = 9\nresolution = 60\n",
    );
    let out = run.out_dir("kde");
    assert_exit(&run.invoke("estimate", &config, &out, &[]), 0);
    let grid = read(&out, "kde_grid.csv");
    assert_eq!(grid.lines().next().unwrap(), "x1,action,density");
    assert_eq!(grid.lines().count(), 1 + 60 * 2);
    let report = read(&out, "estimate_report.csv");
    let integral: f64 = report.lines().nth(1).unwrap().split(',').last().unwrap().parse().unwrap();
    assert!((integral - 1.0).abs() < 0.2, "boundary loss only: {report}");
}
