use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use infodyn::midi::testing::write_format0;
use infodyn::midi::NoteEvent;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const BIN: &str = env!("CARGO_BIN_EXE_infodyn");
const TRAIN_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/midi/train");

fn infodyn(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 4/4 piece of `bars` bars cycling through a few chords.
fn synthetic_midi(path: &Path, bars: u64) {
    let chords: [&[u8]; 3] = [&[60, 64, 67], &[62, 65, 69], &[55, 59, 62, 65]];
    let mut notes = Vec::new();
    for b in 0..bars {
        for beat in 0..4 {
            for &p in chords[((b + beat / 2) % 3) as usize] {
                notes.push(NoteEvent {
                    onset_tick: b * 1920 + beat * 480,
                    duration_ticks: 480,
                    pitch: p,
                    velocity: 80,
                    channel: 0,
                });
            }
        }
    }
    notes.sort_by_key(|n| (n.onset_tick, n.pitch));
    fs::write(path, write_format0(480, &notes, false)).unwrap();
}

fn train_small(dir: &Path, seed: &str) -> PathBuf {
    let out = infodyn(&[
        "train-vae",
        "--seed",
        seed,
        "--train-dir",
        TRAIN_DIR,
        "--epochs",
        "2",
        "--latent-dim",
        "16",
        "--out-dir",
        s(dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join("vae.params")
}

#[test]
fn help_and_bad_flags() {
    let out = infodyn(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("train-vae"));
    for cmd in ["train-vae", "analyze", "oracle", "mine"] {
        let out = infodyn(&[cmd, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        for flag in ["--config", "--seed", "--threads", "--out-dir"] {
            assert!(stdout(&out).contains(flag), "{cmd} lacks {flag}");
        }
    }
    let out = infodyn(&["analyze", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"));
}

#[test]
fn oracle_on_symbol_strings() {
    let out = infodyn(&["oracle", "abab", "--theta", "0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("alphabet_size: 2"), "{text}");
    assert!(text.contains("states: 5"));

    let out = infodyn(&["oracle", "aaaa", "--theta", "0"]);
    let text = stdout(&out);
    assert!(text.contains("alphabet_size: 1"));
    assert!(text.contains("total_ir_bits: 0\n"), "{text}");

    let out = infodyn(&["oracle", "", "--theta", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("empty"));
}

#[test]
fn oracle_sweep_needs_a_seed() {
    let out = infodyn(&["oracle", "abcabcabd"]);
    assert_eq!(out.status.code(), Some(2));
    let out = infodyn(&["oracle", "abcabcabd", "--seed", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn oracle_on_midi_runs_the_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let params = train_small(dir.path(), "3");
    let midi = dir.path().join("piece.mid");
    synthetic_midi(&midi, 12);
    let out = infodyn(&["oracle", s(&midi), "--params", s(&params), "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = stdout(&out)
        .lines()
        .skip_while(|l| !l.starts_with("position"))
        .count();
    assert_eq!(rows, 13);
}

#[test]
fn train_vae_one_file_one_epoch() {
    let data = tempfile::tempdir().unwrap();
    fs::copy(
        Path::new(TRAIN_DIR).join("bach_bwv846.mid"),
        data.path().join("bach_bwv846.mid"),
    )
    .unwrap();
    fs::write(data.path().join("notes.txt"), "ignored").unwrap();
    let run = |out_dir: &Path| {
        infodyn(&[
            "train-vae",
            "--seed",
            "5",
            "--train-dir",
            s(data.path()),
            "--epochs",
            "1",
            "--latent-dim",
            "8",
            "--out-dir",
            s(out_dir),
        ])
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = run(a.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("final loss"));
    assert!(run(b.path()).status.success());

    let loss = fs::read_to_string(a.path().join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 2);
    assert_eq!(loss.lines().next(), Some("epoch,bce,kl,total"));
    let pa = fs::read(a.path().join("vae.params")).unwrap();
    let pb = fs::read(b.path().join("vae.params")).unwrap();
    assert!(!pa.is_empty());
    assert_eq!(pa, pb);
}

#[test]
fn train_vae_errors_name_the_path() {
    let out = infodyn(&["train-vae", "--seed", "1", "--train-dir", "/no/such/dir"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("/no/such/dir"));

    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("broken.mid"), b"MThd garbage").unwrap();
    let out = infodyn(&["train-vae", "--seed", "1", "--train-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("broken.mid"), "{}", stderr(&out));

    let out = infodyn(&["train-vae", "--train-dir", TRAIN_DIR]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("seed"));
}

#[test]
fn analyze_outputs_and_guards() {
    let dir = tempfile::tempdir().unwrap();
    let params = train_small(dir.path(), "2");
    let piece = dir.path().join("piece.mid");
    synthetic_midi(&piece, 40);
    let short = dir.path().join("short.mid");
    synthetic_midi(&short, 20);

    let out_dir = dir.path().join("plots");
    let out = infodyn(&[
        "analyze",
        "--seed",
        "2",
        "--params",
        s(&params),
        "--midi",
        s(&piece),
        "--rates",
        "10,50,10000",
        "--mine-epochs",
        "10",
        "--out-dir",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rates"].as_array().unwrap().len(), 3);
    for r in [10, 50, 10000] {
        let csv = fs::read_to_string(out_dir.join(format!("rate_{r}.csv"))).unwrap();
        assert_eq!(csv.lines().next(), Some("bar_index,ir_bits,surprisal_bits"));
        assert_eq!(csv.lines().count(), 41);
        for kind in ["ir", "bits", "mine"] {
            assert!(out_dir.join(format!("{kind}_rate_{r}.svg")).exists());
        }
    }

    let bare = dir.path().join("bare");
    let out = infodyn(&[
        "analyze",
        "--seed",
        "2",
        "--params",
        s(&params),
        "--midi",
        s(&piece),
        "--rates",
        "10",
        "--mine-epochs",
        "5",
        "--no-plot",
        "--out-dir",
        s(&bare),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let svgs = fs::read_dir(&bare)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "svg")
        })
        .count();
    assert_eq!(svgs, 0);
    assert!(bare.join("rate_10.csv").exists());

    let out = infodyn(&[
        "analyze",
        "--seed",
        "2",
        "--params",
        s(&params),
        "--midi",
        s(&short),
        "--out-dir",
        s(&bare),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("32"), "{}", stderr(&out));

    let out = infodyn(&[
        "analyze",
        "--seed",
        "2",
        "--params",
        s(&params),
        "--midi",
        s(&piece),
        "--latent-dim",
        "500",
        "--out-dir",
        s(&bare),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(
        err.contains("latent_dim") && err.contains("format version"),
        "{err}"
    );

    let out = infodyn(&[
        "analyze",
        "--seed",
        "2",
        "--params",
        s(&params),
        "--midi",
        s(&piece),
        "--rates",
        "50,10",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = infodyn(&[
        "analyze",
        "--seed",
        "2",
        "--params",
        "/missing.params",
        "--midi",
        s(&piece),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("/missing.params"));
}

#[test]
fn analyze_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let params = train_small(dir.path(), "6");
    let piece = dir.path().join("piece.mid");
    synthetic_midi(&piece, 36);
    let report = |threads: &str| {
        let out_dir = dir.path().join(format!("t{threads}"));
        let out = infodyn(&[
            "analyze",
            "--seed",
            "6",
            "--threads",
            threads,
            "--params",
            s(&params),
            "--midi",
            s(&piece),
            "--rates",
            "3,20",
            "--mine-epochs",
            "10",
            "--no-plot",
            "--out-dir",
            s(&out_dir),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read(out_dir.join("report.json")).unwrap()
    };
    assert_eq!(report("1"), report("4"));
}

#[test]
fn analyze_reads_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let params = train_small(dir.path(), "4");
    let piece = dir.path().join("piece.mid");
    synthetic_midi(&piece, 36);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 4\nout_dir = \"{}\"\n\n[paths]\nparams = \"{}\"\nmidi = \"{}\"\n\n[analysis]\nrates = [5]\nplots = false\n\n[mine]\nepochs = 5\n",
            s(&dir.path().join("out")),
            s(&params),
            s(&piece)
        ),
    )
    .unwrap();
    let out = infodyn(&["analyze", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("out/rate_5.csv").exists());

    fs::write(&cfg, "seed = 4\nunknown_key = 1\n").unwrap();
    let out = infodyn(&["analyze", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) {
    let mut text = format!("{header}\n");
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn mine_bits(out: &Output) -> (f64, f64, bool) {
    assert!(out.status.success(), "{}", stderr(out));
    let v: serde_json::Value = serde_json::from_str(&stdout(out)).unwrap();
    (
        v["bits"].as_f64().unwrap(),
        v["raw_bits"].as_f64().unwrap(),
        v["reliable"].as_bool().unwrap(),
    )
}

#[test]
fn mine_command() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z: Vec<Vec<f64>> = (0..2000)
        .map(|_| vec![rng.sample(StandardNormal)])
        .collect();
    let y: Vec<Vec<f64>> = (0..2000)
        .map(|_| vec![rng.sample(StandardNormal)])
        .collect();
    let (zp, yp, short) = (
        dir.path().join("z.csv"),
        dir.path().join("y.csv"),
        dir.path().join("short.csv"),
    );
    write_csv(&zp, "z", &z);
    write_csv(&yp, "y", &y);
    write_csv(&short, "y", &y[..1999]);

    let out = infodyn(&["mine", s(&zp), s(&short), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("mismatch"));

    let out_dir = dir.path().join("m");
    let out = infodyn(&[
        "mine",
        s(&zp),
        s(&yp),
        "--seed",
        "1",
        "--epochs",
        "100",
        "--out-dir",
        s(&out_dir),
    ]);
    let (_, raw, _) = mine_bits(&out);
    assert!(raw.abs() < 0.1, "independent columns gave {raw}");
    let curve = fs::read_to_string(out_dir.join("mine_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 101);

    // a small file paired with itself saturates the estimator
    let few: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![i as f64, (i * 7 % 13) as f64])
        .collect();
    let fp = dir.path().join("few.json");
    fs::write(&fp, serde_json::to_string(&few).unwrap()).unwrap();
    let out = infodyn(&[
        "mine",
        s(&fp),
        s(&fp),
        "--seed",
        "1",
        "--epochs",
        "300",
        "--out-dir",
        s(&out_dir),
    ]);
    let (bits, raw, reliable) = mine_bits(&out);
    assert!(bits > 3.0, "self-MI estimate {bits}");
    assert_eq!(reliable, raw <= (40f64).log2() + 2.0);
}

#[test]
fn mine_recovers_correlated_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut z, mut y) = (Vec::new(), Vec::new());
    for _ in 0..10_000 {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        z.push(vec![a]);
        y.push(vec![0.9 * a + (1.0f64 - 0.81).sqrt() * b]);
    }
    let (zp, yp) = (dir.path().join("z.csv"), dir.path().join("y.csv"));
    write_csv(&zp, "z", &z);
    write_csv(&yp, "y", &y);
    let out = infodyn(&[
        "mine",
        s(&zp),
        s(&yp),
        "--seed",
        "2",
        "--out-dir",
        s(dir.path()),
    ]);
    let (bits, _, _) = mine_bits(&out);
    let analytic = -0.5 * (1.0f64 - 0.81).log2();
    assert!(
        (bits - analytic).abs() / analytic < 0.2,
        "{bits} vs {analytic}"
    );
}
