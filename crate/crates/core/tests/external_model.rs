mod common;

use std::path::PathBuf;

use evtfair::scoring::{ExternalModel, ScoreError, ScoreModel};
use evtfair::tabular::{Record, Value};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn model(script: &str) -> ExternalModel {
    ExternalModel::new(vec!["sh".into(), fixture(script)], common::task_schema()).unwrap()
}

fn rows(n: usize) -> Vec<Record> {
    (0..n)
        .map(|i| {
            vec![
                Value::Num(i as f64 - 2.0),
                Value::Num(0.5),
                Value::Cat(if i % 2 == 0 { "White" } else { "Black" }.into()),
                Value::Num(1.0),
            ]
        })
        .collect()
}

#[test]
fn scores_in_input_order() {
    let s = model("score_x1.sh").score(&rows(5)).unwrap();
    assert_eq!(s.len(), 5);
    for (i, p) in s.iter().enumerate() {
        let x = i as f64 - 2.0;
        assert!((p - 1.0 / (1.0 + (-x).exp())).abs() < 1e-12);
    }
}

#[test]
fn wrong_count_is_a_failure() {
    let err = model("short_output.sh").score(&rows(5)).unwrap_err();
    assert!(matches!(err, ScoreError::ExternalModelFailure(_)), "{err}");
}

#[test]
fn nonzero_exit_is_a_failure() {
    assert!(matches!(
        model("fails.sh").score(&rows(3)),
        Err(ScoreError::ExternalModelFailure(_))
    ));
}

#[test]
fn out_of_range_output_is_a_failure() {
    assert!(matches!(
        model("out_of_range.sh").score(&rows(2)),
        Err(ScoreError::ExternalModelFailure(_))
    ));
}

#[test]
fn empty_command_rejected() {
    assert!(ExternalModel::new(vec![], common::task_schema()).is_err());
    assert!(ExternalModel::from_command_line("   ", common::task_schema()).is_err());
}

#[test]
fn missing_executable() {
    let m = ExternalModel::new(vec!["/nonexistent/model".into()], common::task_schema()).unwrap();
    assert!(matches!(m.score(&rows(1)), Err(ScoreError::ExternalModelFailure(_))));
}

#[test]
fn wrong_width_rejected() {
    let bad = vec![vec![Value::Num(1.0)]];
    assert!(matches!(model("score_x1.sh").score(&bad), Err(ScoreError::SchemaMismatch(_))));
}
