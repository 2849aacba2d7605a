use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pc_core::problems::{generate_nk, parse_dimacs, parse_nk};
use pc_core::trace::parse_line;

fn pc(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pc"));
    cmd.args(args);
    match env_seed {
        Some(s) => cmd.env("PC_SEED", s),
        None => cmd.env_remove("PC_SEED"),
    };
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn assignment(text: &str) -> Vec<usize> {
    let line = text
        .lines()
        .find(|l| l.starts_with("v "))
        .expect("assignment line");
    line.split_whitespace()
        .skip(1)
        .map(|t| t.parse::<i64>().unwrap())
        .take_while(|&l| l != 0)
        .map(|l| usize::from(l > 0))
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn planted_run_prints_verified_assignment() {
    let o = pc(
        &[
            "solve-ksat",
            "--planted",
            "20",
            "60",
            "3",
            "1",
            "--mixtures",
            "1",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("s SATISFIABLE"));
    let z = assignment(&text);
    let gen = pc(
        &[
            "generate", "ksat", "--n", "20", "--c", "60", "--k", "3", "--seed", "1",
        ],
        None,
    );
    let inst = parse_dimacs(&stdout(&gen)).unwrap();
    assert!(inst.is_satisfied(&z));
}

#[test]
fn trivial_clause_solves_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "one.cnf", "p cnf 3 1\n1 -2 3 0\n");
    let o = pc(&["solve-ksat", &f], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let inner: u64 = text
        .split_whitespace()
        .find_map(|t| t.strip_prefix("inner="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(inner <= 10, "{inner}");
}

#[test]
fn unsatisfiable_instance_reports_violation() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "unsat.cnf", "p cnf 1 2\n1 0\n-1 0\n");
    let o = pc(&["solve-ksat", &f, "--max-iters", "2000"], None);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("s UNKNOWN"));
    let ev: f64 = text
        .split_whitespace()
        .find_map(|t| t.strip_prefix("final_expected_violation="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(ev >= 0.25, "{ev}");
}

#[test]
fn usage_and_parse_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.cnf", "p cnf 2 1\n3 0\n");
    assert_eq!(pc(&["solve-ksat", &bad], None).status.code(), Some(2));
    assert_eq!(pc(&["solve-ksat"], None).status.code(), Some(2));
    assert_eq!(
        pc(&["solve-ksat", "--planted", "2", "1"], None)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pc(
            &[
                "solve-ksat",
                "--planted",
                "5",
                "5",
                "3",
                "0",
                "--update",
                "magic"
            ],
            None
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        pc(&["solve-nk", "--n", "4", "--k", "4"], None)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pc(&["solve-nk", "--n", "4", "--k", "1"], Some("abc"))
            .status
            .code(),
        Some(2)
    );
    assert_eq!(pc(&["nonsense"], None).status.code(), Some(2));
    let missing = dir.path().join("missing.cnf");
    assert_eq!(
        pc(&["solve-ksat", missing.to_str().unwrap()], None)
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn traces_are_byte_identical_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.trace");
    let b = dir.path().join("b.trace");
    for p in [&a, &b] {
        let o = pc(
            &[
                "solve-ksat",
                "--planted",
                "30",
                "120",
                "3",
                "2",
                "--mixtures",
                "3",
                "--seed",
                "5",
                "--trace",
                p.to_str().unwrap(),
            ],
            None,
        );
        assert!(o.status.code().is_some());
    }
    let ta = fs::read(&a).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, fs::read(&b).unwrap());
    let text = String::from_utf8(ta).unwrap();
    let mut last = 0u64;
    for line in text.lines() {
        let kv = parse_line(line);
        assert_eq!(kv[0], ("v", "1"));
        let iter: u64 = kv
            .iter()
            .find(|(k, _)| *k == "iter")
            .unwrap()
            .1
            .parse()
            .unwrap();
        assert!(iter > last);
        last = iter;
        for (k, v) in &kv {
            if ["L", "EG", "EV", "T", "T_hat", "lambda_l1", "js"].contains(k) {
                assert!(v.parse::<f64>().unwrap().is_finite(), "{k}={v}");
            }
        }
        assert!(kv.iter().any(|(k, _)| *k == "c2.mode"));
    }
}

#[test]
fn seed_env_overrides_flag() {
    let run = |seed: &str, env: Option<&str>| {
        stdout(&pc(
            &[
                "solve-nk",
                "--n",
                "12",
                "--k",
                "2",
                "--mixtures",
                "2",
                "--seed",
                seed,
            ],
            env,
        ))
    };
    assert_eq!(run("1", Some("9")), run("9", None));
    assert_ne!(run("1", None), run("9", None));
    assert_eq!(run("3", None), run("3", None));
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "pc.toml", "seed = 9\nmixtures = 2\n");
    let from_file = stdout(&pc(
        &["--config", &cfg, "solve-nk", "--n", "12", "--k", "2"],
        None,
    ));
    let from_flags = stdout(&pc(
        &[
            "solve-nk",
            "--n",
            "12",
            "--k",
            "2",
            "--seed",
            "9",
            "--mixtures",
            "2",
        ],
        None,
    ));
    assert_eq!(from_file, from_flags);
    let overridden = stdout(&pc(
        &[
            "--config",
            &cfg,
            "solve-nk",
            "--n",
            "12",
            "--k",
            "2",
            "--mixtures",
            "1",
        ],
        None,
    ));
    assert!(overridden.contains("mixtures=1 seed=9"));
    let bad = write(dir.path(), "bad.toml", "sed = 9\n");
    assert_eq!(
        pc(
            &["--config", &bad, "solve-nk", "--n", "5", "--k", "1"],
            None
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn separable_nk_prints_per_bit_optimum() {
    let o = pc(&["solve-nk", "--n", "10", "--k", "0", "--seed", "4"], None);
    assert_eq!(o.status.code(), Some(0));
    let inst = generate_nk(10, 0, 4).unwrap();
    let expected: String = inst
        .tables()
        .iter()
        .map(|t| if t[1] < t[0] { '1' } else { '0' })
        .collect();
    let text = stdout(&o);
    assert!(text.contains(&format!("mode={expected}")), "{text}");
}

#[test]
fn nk_mixture_reports_hamming_distances() {
    let o = pc(
        &[
            "solve-nk",
            "--n",
            "12",
            "--k",
            "2",
            "--mixtures",
            "3",
            "--seed",
            "2",
            "--threads",
            "2",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("hamming ")).count(),
        3
    );
    assert_eq!(
        text.lines().filter(|l| l.starts_with("component ")).count(),
        3
    );
}

#[test]
fn generated_instances_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("x.cnf");
    let nk = dir.path().join("x.nk");
    assert_eq!(
        pc(
            &[
                "generate",
                "ksat",
                "--n",
                "15",
                "--c",
                "40",
                "--seed",
                "3",
                "--out",
                cnf.to_str().unwrap()
            ],
            None
        )
        .status
        .code(),
        Some(0)
    );
    assert_eq!(
        pc(
            &[
                "generate",
                "nk",
                "--n",
                "9",
                "--k",
                "2",
                "--seed",
                "3",
                "--out",
                nk.to_str().unwrap()
            ],
            None
        )
        .status
        .code(),
        Some(0)
    );
    let cnf_text = fs::read_to_string(&cnf).unwrap();
    let inst = parse_dimacs(&cnf_text).unwrap();
    assert_eq!(pc_core::problems::emit_dimacs(&inst), cnf_text);
    let nk_text = fs::read_to_string(&nk).unwrap();
    assert_eq!(parse_nk(&nk_text).unwrap(), generate_nk(9, 2, 3).unwrap());
    let again = stdout(&pc(
        &["generate", "ksat", "--n", "15", "--c", "40", "--seed", "3"],
        None,
    ));
    assert_eq!(again, cnf_text);
    let o = pc(
        &[
            "solve-nk",
            "--instance",
            nk.to_str().unwrap(),
            "--seed",
            "1",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("n=9 k=2 instance_seed=3"));
}

#[test]
fn landscape_reports_both_minima() {
    let o = pc(&["landscape", "--demo", "paper2x2", "--grid", "201"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let minima: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("# minimum"))
        .collect();
    assert_eq!(minima.len(), 2);
    assert_eq!(
        text.lines().filter(|l| !l.starts_with('#')).count(),
        201 * 201
    );
}
