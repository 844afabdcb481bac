//! End-to-end tests that drive the compiled `gdse` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gdse_core::audio::{write_wav, Wave};
use gdse_core::diffusion::sample_unguided;
use gdse_core::numerics::Rng;
use gdse_core::schedules::DiffusionSchedule;
use gdse_core::weights::load_backbone;

const BIN: &str = env!("CARGO_BIN_EXE_gdse");

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("gdse-cli-tests")
        .join(format!("{name}-{}", std::process::id()));
    // Stale files from an earlier aborted run would poison byte comparisons.
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn gdse(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited with a code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn expect_ok(out: &Output, what: &str) {
    assert_eq!(
        code(out),
        0,
        "{what} failed\nstdout:\n{}\nstderr:\n{}",
        stdout(out),
        stderr(out)
    );
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

/// Small but complete pipeline settings: T = 10 and two 1024-sample clips
/// keep every stage under a few seconds.
fn smoke_config(out: &Path, lambda_max: f64) -> String {
    format!(
        r#"
[schedule]
t = 10
beta_start = 1e-3
beta_end = 0.1

[backbone]
layers = 3
channels = 4
emb_dim = 8
epochs = 30
batch = 4
segment = 512
seed = 11

[noise_model]
layers = 3
epochs = 4
seed = 12

[guidance]
lambda_max = {lambda_max}
gamma = 0.7

[io]
out_dir = "{out}"
clips = 2
clip_len = 1024
snrs = [5.0]
seed = 13

[sweep]
lambdas = [0.0, 0.7]
gammas = [0.7]
"#,
        out = out.display()
    )
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let out = gdse(&["synth"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--config"), "{}", stderr(&out));

    let out = gdse(&["--config", "/nonexistent/gdse.toml", "synth"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("reading config"), "{}", stderr(&out));

    let out = gdse(&["no-such-command"]);
    assert_eq!(code(&out), 1);

    let out = gdse(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("enhance"));
}

#[test]
fn malformed_configs_are_rejected_with_the_offending_key() {
    let dir = scratch("badcfg");
    let body = smoke_config(&dir.join("out"), 0.7);

    let unknown = write_config(&dir, "unknown.toml", &body.replace("[io]", "[io]\nformat = 1"));
    let out = gdse(&["--config", unknown.to_str().unwrap(), "synth"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("format"), "{}", stderr(&out));

    let no_seed = write_config(&dir, "noseed.toml", &body.replace("seed = 13", ""));
    let out = gdse(&["--config", no_seed.to_str().unwrap(), "synth"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));

    let bad_kind = write_config(
        &dir,
        "badkind.toml",
        &body.replace("[io]", "[io]\nkind = \"pink-noise\""),
    );
    let out = gdse(&["--config", bad_kind.to_str().unwrap(), "synth"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("pink-noise"), "{}", stderr(&out));
}

#[test]
fn full_pipeline_produces_every_artifact() {
    let dir = scratch("pipeline");
    let out_dir = dir.join("out");
    let cfg = write_config(&dir, "config.toml", &smoke_config(&out_dir, 0.7));
    let cfg = cfg.to_str().unwrap();

    let out = gdse(&["--config", cfg, "synth"]);
    expect_ok(&out, "synth");
    assert!(stdout(&out).contains("# resolved config"));
    assert!(stdout(&out).contains("# end config"));
    let corpus = out_dir.join("corpus");
    for name in ["clean_00.wav", "clean_01.wav"] {
        assert!(corpus.join(name).is_file(), "missing {name}");
    }
    for name in ["noisy_00.wav", "noisy_01.wav", "train_noise_00.wav"] {
        assert!(corpus.join("snr_5").join(name).is_file(), "missing {name}");
    }

    let out = gdse(&["--config", cfg, "train-backbone"]);
    expect_ok(&out, "train-backbone");
    assert!(out_dir.join("backbone.gdse").is_file());
    assert!(out_dir.join("backbone_loss.csv").is_file());

    let noise_clip = corpus.join("snr_5").join("train_noise_00.wav");
    let out = gdse(&["--config", cfg, "train-noise", noise_clip.to_str().unwrap()]);
    expect_ok(&out, "train-noise");
    assert!(out_dir.join("train_noise_00.gdse").is_file());
    let loss_csv = std::fs::read_to_string(out_dir.join("train_noise_00_loss.csv")).unwrap();
    assert!(loss_csv.starts_with("t,initial_val_nll,final_val_nll,reverted,aborted"));
    // One row per diffusion step plus the header.
    assert_eq!(loss_csv.lines().count(), 11, "{loss_csv}");

    let noisy = corpus.join("snr_5").join("noisy_00.wav");
    let out = gdse(&[
        "--config",
        cfg,
        "enhance",
        noisy.to_str().unwrap(),
        out_dir.join("backbone.gdse").to_str().unwrap(),
        out_dir.join("train_noise_00.gdse").to_str().unwrap(),
    ]);
    expect_ok(&out, "enhance");
    for name in [
        "noisy_00.enhanced.wav",
        "noisy_00.diag.csv",
        "noisy_00_noisy_spec.pgm",
        "noisy_00_noisy_spec.csv",
        "noisy_00_enhanced_spec.pgm",
        "noisy_00_enhanced_spec.csv",
    ] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let diag = std::fs::read_to_string(out_dir.join("noisy_00.diag.csv")).unwrap();
    assert!(diag.starts_with("t,loss_t,grad_norm,s_t"));
    assert_eq!(diag.lines().count(), 11, "{diag}");

    let out = gdse(&[
        "--config",
        cfg,
        "eval",
        corpus.join("clean_00.wav").to_str().unwrap(),
        out_dir.join("noisy_00.enhanced.wav").to_str().unwrap(),
        noisy.to_str().unwrap(),
    ]);
    expect_ok(&out, "eval");
    let table = stdout(&out);
    for row in ["si_sdr_db", "noisy", "enhanced", "delta"] {
        assert!(table.contains(row), "eval table misses {row}:\n{table}");
    }
    assert!(out_dir.join("eval_noisy_00.enhanced.csv").is_file());

    let out = gdse(&["--config", cfg, "sweep"]);
    expect_ok(&out, "sweep");
    let sweep = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("snr_db,lambda_max,gamma,clip"));
    // 1 SNR x 1 clip x 2 lambdas x 1 gamma plus the header.
    assert_eq!(sweep.lines().count(), 3, "{sweep}");
}

#[test]
fn same_seed_reruns_are_byte_identical_and_seed_override_changes_them() {
    let dir = scratch("repro");
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let cfg_a = write_config(&dir, "a.toml", &smoke_config(&out_a, 0.7));
    let cfg_b = write_config(&dir, "b.toml", &smoke_config(&out_b, 0.7));
    let (cfg_a, cfg_b) = (cfg_a.to_str().unwrap(), cfg_b.to_str().unwrap());

    expect_ok(&gdse(&["--config", cfg_a, "synth"]), "synth a");
    expect_ok(&gdse(&["--config", cfg_b, "synth"]), "synth b");
    let wav_a = std::fs::read(out_a.join("corpus/clean_00.wav")).unwrap();
    let wav_b = std::fs::read(out_b.join("corpus/clean_00.wav")).unwrap();
    assert_eq!(wav_a, wav_b, "same-seed corpora differ across directories");

    expect_ok(&gdse(&["--config", cfg_a, "train-backbone"]), "train-backbone");
    let noise_clip = out_a.join("corpus/snr_5/train_noise_00.wav");
    expect_ok(
        &gdse(&["--config", cfg_a, "train-noise", noise_clip.to_str().unwrap()]),
        "train-noise",
    );

    let noisy = out_a.join("corpus/snr_5/noisy_00.wav");
    let backbone = out_a.join("backbone.gdse");
    let bank = out_a.join("train_noise_00.gdse");
    let enhance = |extra: &[&str]| {
        let mut args = vec!["--config", cfg_a];
        args.extend_from_slice(extra);
        args.extend_from_slice(&[
            "enhance",
            noisy.to_str().unwrap(),
            backbone.to_str().unwrap(),
            bank.to_str().unwrap(),
        ]);
        let out = gdse(&args);
        expect_ok(&out, "enhance");
        std::fs::read(out_a.join("noisy_00.enhanced.wav")).unwrap()
    };

    let first = enhance(&[]);
    let reseeded = enhance(&["--seed", "99"]);
    assert_ne!(first, reseeded, "--seed 99 did not change the output");
    let again = enhance(&[]);
    assert_eq!(first, again, "same-seed enhance is not reproducible");
}

#[test]
fn zero_guidance_output_matches_the_unguided_core_sampler() {
    let dir = scratch("zeroguide");
    let out_dir = dir.join("out");
    let cfg = write_config(&dir, "config.toml", &smoke_config(&out_dir, 0.0));
    let cfg = cfg.to_str().unwrap();

    expect_ok(&gdse(&["--config", cfg, "synth"]), "synth");
    expect_ok(&gdse(&["--config", cfg, "train-backbone"]), "train-backbone");
    let noise_clip = out_dir.join("corpus/snr_5/train_noise_00.wav");
    expect_ok(
        &gdse(&["--config", cfg, "train-noise", noise_clip.to_str().unwrap()]),
        "train-noise",
    );
    let noisy = out_dir.join("corpus/snr_5/noisy_00.wav");
    expect_ok(
        &gdse(&[
            "--config",
            cfg,
            "enhance",
            noisy.to_str().unwrap(),
            out_dir.join("backbone.gdse").to_str().unwrap(),
            out_dir.join("train_noise_00.gdse").to_str().unwrap(),
        ]),
        "enhance",
    );

    // Rebuild the unguided sample directly from the saved weights: with
    // lambda_max = 0 the binary must have produced exactly this file.
    let (net, _) = load_backbone::<f64>(&out_dir.join("backbone.gdse")).unwrap();
    let sched = DiffusionSchedule::linear(10, 1e-3, 0.1).unwrap();
    let mut rng = Rng::from_seed(13);
    let sample = sample_unguided(1024, &net, &sched, &mut rng, true).unwrap();
    let reference = dir.join("reference.wav");
    write_wav(&Wave::new(sample, 16_000).unwrap(), &reference).unwrap();

    let ours = std::fs::read(out_dir.join("noisy_00.enhanced.wav")).unwrap();
    let theirs = std::fs::read(&reference).unwrap();
    assert_eq!(ours, theirs, "zero-guidance enhance diverged from the sampler");
}

#[test]
fn workers_flag_caps_the_thread_pool_without_changing_results() {
    let dir = scratch("workers");
    let out_dir = dir.join("out");
    let cfg = write_config(&dir, "config.toml", &smoke_config(&out_dir, 0.7));
    let out = gdse(&["--config", cfg.to_str().unwrap(), "--workers", "1", "synth"]);
    expect_ok(&out, "synth with --workers 1");
    assert!(out_dir.join("corpus/clean_00.wav").is_file());
}
