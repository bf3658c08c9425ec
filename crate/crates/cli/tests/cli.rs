use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ksrg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksrg")).args(args).output().expect("run ksrg")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).filter(|r| r.starts_with(' ')).map(str::trim))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
}

fn dir_listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn exponents_reference() {
    let o = ksrg(&["exponents", "--d", "1", "--sigma", "1", "--tau", "2.2", "--alpha", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(field(&s, "zeta_star").parse::<f64>().unwrap(), 0.5);
    assert_eq!(field(&s, "m_star"), "1");
    assert_eq!(field(&s, "dominant_types"), "hh");
}

#[test]
fn exponents_csv_multiplicity_four() {
    let o = ksrg(&["exponents", "--d", "2", "--sigma", "1", "--tau", "2.5", "--alpha", "1.5", "--csv"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.starts_with("quantity,value\n"));
    assert!(s.lines().any(|l| l == "m_star,4"), "{s}");
}

#[test]
fn infinite_parameters_accepted() {
    let o = ksrg(&["exponents", "--d", "2", "--tau", "inf", "--alpha", "inf"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&stdout(&o), "zeta_star").parse::<f64>().unwrap(), 0.5);
}

#[test]
fn missing_config_is_status_two_with_path() {
    let o = ksrg(&["exponents", "--config", "/definitely/not/here.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("/definitely/not/here.toml"), "{e}");
    assert_eq!(e.trim().lines().count(), 1);
}

#[test]
fn invalid_values_are_status_two() {
    assert_eq!(ksrg(&["exponents", "--tau", "1.5"]).status.code(), Some(2));
    assert_eq!(ksrg(&["exponents", "--tau", "abc"]).status.code(), Some(2));
    assert_eq!(ksrg(&["exponents", "--kernel", "sum", "--sigma", "1"]).status.code(), Some(2));
    assert_eq!(ksrg(&["no-such-command"]).status.code(), Some(2));
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("x");
    let o = ksrg(&["experiment", "boundary", "--k-grid", "8,4", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists(), "nothing written before validation");
}

#[test]
fn unwritable_output_is_status_one() {
    let t = tempfile::tempdir().unwrap();
    let file = t.path().join("plain");
    fs::write(&file, "x").unwrap();
    let bad = file.join("sub");
    let o = ksrg(&["phase-diagram", "--resolution", "4", "--out-dir", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn config_file_then_flags() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.toml");
    fs::write(&cfg, "seed = 3\n[model]\nd = 2\ntau = 2.5\nalpha = 1.5\nsigma = 1\n").unwrap();
    let o = ksrg(&["exponents", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&stdout(&o), "m_star"), "4");
    // flag wins over the file
    let o = ksrg(&["exponents", "--config", cfg.to_str().unwrap(), "--d", "1", "--tau", "2.2", "--alpha", "3"]);
    assert_eq!(field(&stdout(&o), "m_star"), "1");
    // unknown keys are rejected
    fs::write(&cfg, "sede = 3\n").unwrap();
    assert_eq!(ksrg(&["exponents", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn sample_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a.txt");
    let b = t.path().join("b.txt");
    for p in [&a, &b] {
        let o = ksrg(&["sample", "--n", "300", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (sa, sb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(sa, sb);
    let text = String::from_utf8(sa).unwrap();
    assert!(text.contains("# seed 7"));
    let c = t.path().join("c.txt");
    ksrg(&["sample", "--n", "300", "--seed", "8", "--out", c.to_str().unwrap()]);
    assert_ne!(fs::read(&c).unwrap(), text.as_bytes());
}

#[test]
fn dump_format() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path().join("g.txt");
    let o = ksrg(&["sample", "--d", "2", "--n", "100", "--seed", "1", "--method", "exact", "--out", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&p).unwrap();
    let mut nv = 0;
    for l in text.lines() {
        let f: Vec<&str> = l.split_whitespace().collect();
        match f[0] {
            "#" => {}
            "v" => {
                assert_eq!(f.len(), 5);
                assert!(f[4].parse::<f64>().unwrap() >= 1.0);
                nv += 1;
            }
            "e" => {
                let (u, v): (usize, usize) = (f[1].parse().unwrap(), f[2].parse().unwrap());
                assert!(u < v && v < nv);
            }
            other => panic!("unexpected line kind {other}"),
        }
    }
    assert!(nv > 0);
}

#[test]
fn experiment_outputs_are_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let d = t.path().join(name);
        let o = ksrg(&["experiment", "boundary", "--k-grid", "2^4..2^8", "--reps", "5", "--seed", "7", "--out-dir", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        d
    };
    let (a, b) = (run("a"), run("b"));
    let files = dir_listing(&a);
    assert_eq!(
        files,
        ["boundary.csv", "boundary.svg", "boundary_fit.csv", "boundary_rows.csv", "config.resolved"]
    );
    for f in &files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let rows = fs::read_to_string(a.join("boundary_rows.csv")).unwrap();
    assert!(rows.starts_with("experiment,params,n,k,rep,seed,origin_cluster,largest,second_largest,boundary,a_bb\n"));
    assert_eq!(rows.lines().count(), 1 + 5 * 5);
    let resolved = fs::read_to_string(a.join("config.resolved")).unwrap();
    assert!(resolved.contains("seed = 7"), "{resolved}");
    assert!(resolved.contains("reps = 5"));
    assert!(resolved.contains("command = \"experiment boundary\""));
}

#[test]
fn config_resolved_reruns_identically() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    let o = ksrg(&["experiment", "giant", "--n-grid", "2^8..2^10", "--reps", "3", "--beta", "0.5", "--out-dir", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let b = t.path().join("b");
    let cfg = a.join("config.resolved");
    let o = ksrg(&["experiment", "giant", "--config", cfg.to_str().unwrap(), "--out-dir", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("giant.csv")).unwrap(), fs::read(b.join("giant.csv")).unwrap());
    assert_eq!(fs::read(a.join("config.resolved")).unwrap(), fs::read(b.join("config.resolved")).unwrap());
}

#[test]
fn cluster_experiments_write_their_tables() {
    let t = tempfile::tempdir().unwrap();
    let s = t.path().join("s");
    let o = ksrg(&["experiment", "second", "--n-grid", "2^8..2^11", "--reps", "3", "--beta", "0.3", "--out-dir", s.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(s.join("second.csv")).unwrap().starts_with("n,reps,median,q25,q75,max\n"));
    assert!(fs::read_to_string(s.join("second_fit.csv")).unwrap().starts_with("quantity,x_transform,y_transform,slope,intercept,r_squared,points,target,note\n"));
    let d = t.path().join("d");
    let o = ksrg(&["experiment", "decay", "--n", "2^9", "--k-grid", "1,2,4,8", "--reps", "20", "--beta", "0.3", "--out-dir", d.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(d.join("decay.csv")).unwrap().starts_with("k,reps,hits,p_hat,wilson_lo,wilson_hi,excluded\n"));
    let rows = fs::read_to_string(d.join("decay_rows.csv")).unwrap();
    // palm runs fill origin_cluster
    let first = rows.lines().nth(1).unwrap();
    assert!(!first.split(',').nth(7).unwrap().is_empty());
}

#[test]
fn phase_diagram_stays_in_out_dir() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("phase");
    let o = ksrg(&["phase-diagram", "--axes", "sigma-tau", "--resolution", "10", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(dir_listing(t.path()), ["phase"]);
    assert_eq!(dir_listing(&out), ["config.resolved", "phase.csv", "phase.svg"]);
    let csv = fs::read_to_string(out.join("phase.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    assert_eq!(ksrg(&["phase-diagram", "--axes", "x-y", "--out-dir", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn cover_report_passes() {
    let t = tempfile::tempdir().unwrap();
    let pts = t.path().join("pts.txt");
    let mut text = String::from("# two clumps\n");
    for i in 0..200 {
        text.push_str(&format!("{}\n", -3.0 + 6.0 * (i as f64) / 200.0));
    }
    for i in 0..40 {
        text.push_str(&format!("{}\n", 40.0 + (i as f64) / 40.0));
    }
    fs::write(&pts, text).unwrap();
    let out = t.path().join("cv");
    let o = ksrg(&["cover", "--points", pts.to_str().unwrap(), "--n", "100000", "--wbar", "30", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(field(&s, "all"), "pass");
    assert_eq!(field(&s, "points"), "240");
    assert_eq!(fs::read_to_string(out.join("cover_report.txt")).unwrap(), s);
    // w̄ below the admissible minimum
    let o = ksrg(&["cover", "--points", pts.to_str().unwrap(), "--n", "100000", "--wbar", "1"]);
    assert_eq!(o.status.code(), Some(2));
    // wrong dimension
    let o = ksrg(&["cover", "--d", "2", "--points", pts.to_str().unwrap(), "--n", "100000", "--wbar", "30"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn backbone_csv() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("bb");
    let o = ksrg(&["backbone", "--seeds", "2", "--seed", "5", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("backbone.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "seed,a_bb,band_vertices,min_box_count,greedy_success,claims_checked,claims_ok");
    assert_eq!(lines.count(), 2);
    // outside the backbone regime
    let o = ksrg(&["backbone", "--tau", "3.5", "--seeds", "1", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn profile_slopes_rejects_few_reps() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("pf");
    let o = ksrg(&["profile-slopes", "--reps", "10", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = ksrg(&["profile-slopes", "--k-grid", "2^4..2^7", "--reps", "30", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(out.join("profile_counts.csv")).unwrap().starts_with("k,rep,count_above,edges_below_cross\n"));
}

#[test]
fn help_documents_csv_columns() {
    let cases: &[(&[&str], &[&str])] = &[
        (&["exponents"], &["quantity", "value"]),
        (&["phase-diagram"], &["x, y", "zeta_star", "m_star", "dominant"]),
        (&["backbone"], &["seed", "a_bb", "band_vertices", "min_box_count", "greedy_success", "claims_checked", "claims_ok"]),
        (&["profile-slopes"], &["k, rep, count_above", "edges_below_cross", "r_squared", "target"]),
        (
            &["experiment", "decay"],
            &["origin_cluster", "second_largest", "p_hat", "wilson_lo", "wilson_hi", "excluded", "median", "q25", "q75", "stddev", "stderr", "note"],
        ),
        (&["experiment", "boundary"], &["k, reps, mean, stderr"]),
        (&["experiment", "second"], &["n, reps, median, q25, q75, max"]),
        (&["experiment", "giant"], &["n, reps, mean, stddev"]),
    ];
    for (cmd, cols) in cases {
        let mut args = cmd.to_vec();
        args.push("--help");
        let o = ksrg(&args);
        assert!(o.status.success());
        let h = stdout(&o);
        for c in *cols {
            assert!(h.contains(c), "{cmd:?} help lacks {c}");
        }
    }
}
