mod common;

use dml_s2r::dataio::{load_clean, load_csv, PreparedDataset};
use dml_s2r::schema::Schema;
use dml_s2r_core::data::make_split;
use dml_s2r_core::psm::{build_pairs, psm_loss};
use dml_s2r_core::SiameseModel;

fn load(name: &str) -> Option<(Schema, std::path::PathBuf)> {
    let schema = Schema::load(&common::schema(name)).unwrap();
    let path = schema.data_file(&common::data_dir()).unwrap();
    path.exists().then_some((schema, path))
}

#[test]
fn boston_has_506_rows_and_13_features() {
    let (schema, path) = load("boston").expect("Boston CSV ships with the repository");
    let d = load_csv(&path, &schema).unwrap();
    assert_eq!((d.n_samples(), d.n_features()), (506, 13));
    assert_eq!(d.feature_names[0], "CRIM");
    assert_eq!(d.feature_names[12], "LSTAT");
    assert_eq!(d.targets[0], 24.0);
    assert_eq!(d.targets[1], 21.6);
    let split = make_split(&d, 10, schema.unlabeled, 0).unwrap();
    assert_eq!(split.test_idx.len(), 296);
}

#[test]
fn boston_prepared_features_are_unit_scaled() {
    let (schema, path) = load("boston").unwrap();
    let p = PreparedDataset::build(&path, &schema).unwrap();
    assert_eq!(p.raw_rows, 506);
    assert!(p.dataset.features.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(p.dataset.targets[..2], [24.0, 21.6]);
}

#[test]
fn psm_loss_on_boston_matches_double_loop() {
    let (schema, path) = load("boston").unwrap();
    let p = PreparedDataset::build(&path, &schema).unwrap();
    let split = make_split(&p.dataset, 10, 200, 0).unwrap();
    let s = split.materialize(&p.dataset).unwrap();
    let model = SiameseModel::new(13, 5).unwrap();
    let got = psm_loss(&model, &build_pairs(&s.labeled.targets).unwrap(), &s.labeled.features).unwrap();

    let mut sum = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            if i != j {
                let f = model
                    .pair_forward(
                        &s.labeled.features.select_rows(&[i]),
                        &s.labeled.features.select_rows(&[j]),
                    )
                    .unwrap()[0];
                let z = s.labeled.targets[i] - s.labeled.targets[j];
                sum += (z - f) * (z - f);
            }
        }
    }
    let want = sum / 90.0;
    assert!((got - want).abs() <= 1e-10 * want.max(1.0), "{got} vs {want}");
}

#[test]
#[ignore = "needs superconductivity/train.csv under DML_S2R_DATA_DIR"]
fn superconductivity_shape() {
    let (schema, path) = load("superconductivity").expect("dataset not found");
    let d = load_csv(&path, &schema).unwrap();
    assert_eq!((d.n_samples(), d.n_features()), (21263, 81));
    assert_eq!(make_split(&d, 50, 1000, 0).unwrap().test_idx.len(), 20213);
}

#[test]
#[ignore = "needs AirQualityUCI.csv under DML_S2R_DATA_DIR"]
fn airquality_cleaning_drops_sentinel_rows() {
    let (schema, path) = load("airquality").expect("dataset not found");
    let raw = load_csv(&path, &schema).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    // independent count: data lines with no -200 in any kept column
    let header: Vec<&str> = text.lines().next().unwrap().split(';').collect();
    let keep: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| !h.is_empty() && !schema.drop.iter().any(|d| d == *h))
        .map(|(i, _)| i)
        .collect();
    let complete = text
        .lines()
        .skip(1)
        .filter(|l| !l.split(';').all(str::is_empty))
        .filter(|l| {
            let cells: Vec<&str> = l.split(';').collect();
            keep.iter().all(|&i| cells[i].replace(',', ".").parse::<f64>().unwrap() != -200.0)
        })
        .count();
    let (clean, raw_rows) = load_clean(&path, &schema).unwrap();
    assert_eq!(raw_rows, raw.n_samples());
    assert!(clean.n_samples() < 9357);
    assert_eq!(clean.n_samples(), complete);
}
