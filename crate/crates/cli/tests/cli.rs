use std::path::{Path, PathBuf};
use std::process::Command;

use proboost::boosting::top_start;
use proboost_cli::config::ExperimentConfig;
use proboost_cli::demo::{demo_iris, IrisDemoConfig};
use proboost_cli::prepare::cmd_prepare_data;
use proboost_cli::report::{build_report, Table};
use proboost_cli::run::{cmd_evaluate, cmd_train, load_records, record_path};
use proboost_cli::CliError;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn iris_toml(out: &Path, extra: &str) -> String {
    format!(
        r#"
name = "iris-test"
seed = 3
repetitions = 3
out = "{}"
{extra}

[data]
source = "csv"
path = "{}"

[learner]
family = "vi"
hidden = [6]

[boost]
variant = "weighted"
levels = [1, 2]
mc_samples = 20

[train]
max_epochs = 40
"#,
        out.display(),
        data("iris.csv").display()
    )
}

fn iris_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig::from_toml(&iris_toml(out, ""), Path::new(".")).unwrap()
}

fn proboost(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_proboost"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        proboost(&["train", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        iris_toml(&dir.path().join("o"), "").replace("levels = [1, 2]", "levels = [0]"),
    )
    .unwrap();
    assert_eq!(
        proboost(&["train", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );

    let typo = dir.path().join("typo.toml");
    std::fs::write(&typo, iris_toml(&dir.path().join("o"), "repetitons = 2")).unwrap();
    assert_eq!(
        proboost(&["train", "--config", typo.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );

    let no_data = dir.path().join("nodata.toml");
    std::fs::write(
        &no_data,
        iris_toml(&dir.path().join("o"), "").replace("iris.csv", "absent.csv"),
    )
    .unwrap();
    let out = proboost(&["prepare-data", "--config", no_data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, iris_toml(&dir.path().join("o"), "")).unwrap();
    assert_eq!(
        proboost(&["evaluate", "--config", good.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.toml");
    std::fs::write(&cfg_path, iris_toml(&dir.path().join("o"), "")).unwrap();
    let out2 = dir.path().join("flagged");
    let status = proboost(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--reps",
        "2",
        "--levels",
        "1,3",
        "--weights",
        "fw,vw",
        "--variant",
        "over",
        "--learner",
        "mcd",
        "--seed",
        "11",
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let records = load_records(&out2).unwrap();
    assert_eq!(records.len(), 2 * 2 * 2);
    assert!(records
        .iter()
        .all(|r| r.cell.starts_with("mcd-over-") && r.config.base_seed == 11));
}

#[test]
fn grid_writes_one_record_per_cell_and_repetition_then_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = iris_config(dir.path());
    cfg.repetitions = 10;
    cfg.boost.levels = vec![1, 2, 3, 4];
    let first = cmd_train(&cfg).unwrap();
    assert_eq!(first.written, 40);
    let records = load_records(dir.path()).unwrap();
    assert_eq!(records.len(), 40);

    let n = records[0].data.n_train;
    for r in records.iter().filter(|r| r.config.levels == 1) {
        assert_eq!(r.level_sizes, vec![n]);
        assert_eq!(r.level_total_weights, vec![n as f64]);
    }

    let again = cmd_train(&cfg).unwrap();
    assert_eq!((again.written, again.skipped_repetitions), (0, 10));

    // an interrupted run: one record lost, models kept
    let lost = record_path(&cfg.out, "vi-weighted-V3-vw", 4);
    let before = std::fs::read(&lost).unwrap();
    std::fs::remove_file(&lost).unwrap();
    let resumed = cmd_evaluate(&cfg).unwrap();
    assert_eq!((resumed.written, resumed.skipped_repetitions), (1, 9));
    assert_eq!(std::fs::read(&lost).unwrap(), before);
}

#[test]
fn prepared_data_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = iris_config(dir.path());
    let a = cmd_prepare_data(&cfg).unwrap();
    let bytes = std::fs::read(dir.path().join("prepared/manifest.json")).unwrap();
    let b = cmd_prepare_data(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(dir.path().join("prepared/manifest.json")).unwrap(),
        bytes
    );
    assert_ne!(
        a[0].train_hash, a[1].train_hash,
        "repetitions re-draw the split"
    );
}

#[test]
fn superimposed_preparation_never_mixes_classes() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
name = "sup"
repetitions = 1
out = "{out}"
[data]
source = "idx"
train_images = "{ti}"
train_labels = "{tl}"
test_images = "{ti}"
test_labels = "{tl}"
donor_images = "{di}"
donor_labels = "{dl}"
contamination = {{ kind = "superimpose", fraction = 0.25 }}
split = {{ kind = "stratified", n_train = 200, n_test = 100 }}
[learner]
family = "mcd"
"#,
        out = dir.path().display(),
        ti = data("fashion-test-images-idx3-ubyte").display(),
        tl = data("fashion-test-labels-idx1-ubyte").display(),
        di = data("digits-donor-images-idx3-ubyte").display(),
        dl = data("digits-donor-labels-idx1-ubyte").display(),
    );
    let cfg = ExperimentConfig::from_toml(&text, Path::new(".")).unwrap();
    let m = cmd_prepare_data(&cfg).unwrap();
    assert_eq!(m[0].mixed_pairs, Some(0));
    let pool = proboost::data::load_idx(
        &data("fashion-test-images-idx3-ubyte"),
        &data("fashion-test-labels-idx1-ubyte"),
    )
    .unwrap()
    .len();
    assert_eq!(m[0].superimposed, Some([pool / 4, pool / 4]));
    assert_eq!((m[0].n_train, m[0].n_test), (200, 100));
}

#[test]
fn report_tables_round_trip_and_flag_degenerate_comparisons() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = iris_config(dir.path());
    cfg.weights = vec![
        proboost::ensemble::WeightScheme::Fw,
        proboost::ensemble::WeightScheme::Vw,
    ];
    cmd_train(&cfg).unwrap();
    let records = load_records(dir.path()).unwrap();

    let report = build_report(&records, None, &[]).unwrap();
    for table in [&report.summary, &report.comparisons, &report.plot] {
        let csv = table.to_csv().unwrap();
        let back = Table::from_csv(&csv).unwrap();
        assert_eq!(back.to_text(), table.to_text());
    }
    assert!(report
        .comparisons
        .rows
        .iter()
        .any(|r| r[0] == "vi-weighted-V1-vw" && r[1] == "vi-weighted-V2-vw"));

    // V=1 under FW and VW is the same single learner
    let same = build_report(
        &records,
        Some("vi-weighted-V1-fw"),
        &["vi-weighted-V1-vw".to_string()],
    )
    .unwrap();
    for row in &same.comparisons.rows {
        assert_eq!(row[6], "0.000000", "{row:?}");
        assert_eq!(row[9], "degenerate differences");
    }

    let mut shifted = records.clone();
    for r in shifted.iter_mut().filter(|r| r.cell == "vi-weighted-V2-vw") {
        r.seeds.boost ^= 1;
    }
    let err = build_report(
        &shifted,
        Some("vi-weighted-V1-vw"),
        &["vi-weighted-V2-vw".to_string()],
    )
    .unwrap_err();
    assert!(matches!(err, CliError::Data(_)), "{err}");
}

#[test]
fn iris_trace_keeps_setosa_at_unit_weight() {
    let cfg = IrisDemoConfig::new(data("iris.csv"), 4);
    let (_, trace) = demo_iris(&cfg).unwrap();
    let n = trace.rows.len();
    assert_eq!(n, 150);
    for row in trace.rows.iter().filter(|r| r.class == 0) {
        assert_eq!(row.weights, vec![1.0; 3]);
    }
    let totals: Vec<f64> = (0..3)
        .map(|v| trace.rows.iter().map(|r| r.weights[v]).sum())
        .collect();
    let bump = (n - top_start(n, 0.25)) as f64;
    assert_eq!(
        totals,
        vec![n as f64, n as f64 + bump, n as f64 + 2.0 * bump]
    );

    let (_, again) = demo_iris(&cfg).unwrap();
    assert_eq!(again.to_csv().unwrap(), trace.to_csv().unwrap());
}
