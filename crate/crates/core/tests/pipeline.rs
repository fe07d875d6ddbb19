use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use mtgcn::config::{parse_config_with, ConfigOverrides, ExperimentConfig};
use mtgcn::graph::{load_bundle, planted_partition, write_bundle, PlantedPartition};
use mtgcn::harness::{build_report, run_grid, GridSpec, NetworkResult, PointOutcome};
use mtgcn::train::{aggregate, train_runs, PreparedData};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn meta_only(dir: &Path, name: &str, features: usize, classes: usize) {
    fs::create_dir_all(dir).unwrap();
    fs::write(
        dir.join("meta.json"),
        format!(r#"{{"name": "{name}", "num_nodes": 10, "num_features": {features}, "num_classes": {classes}}}"#),
    )
    .unwrap();
}

fn parse_with_dataset(path: &Path, dataset: &Path) -> ExperimentConfig {
    let o = ConfigOverrides {
        dataset: Some(dataset.to_path_buf()),
        ..Default::default()
    };
    parse_config_with(path, &o).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn seven_variants_are_expressible_per_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    for (ds, d, k) in [("cora", 1433, 7), ("citeseer", 3703, 6)] {
        let meta = tmp.path().join(ds);
        meta_only(&meta, ds, d, k);
        let mut seen = BTreeSet::new();
        for v in ["gcn", "ae", "fr", "er", "ae-fr", "ae-er", "ae-fr-er"] {
            let cfg = parse_with_dataset(&workspace().join(format!("configs/{ds}/{v}.toml")), &meta);
            assert_eq!(cfg.hidden_layers, 1);
            assert_eq!(cfg.epochs, 5000);
            assert_eq!(cfg.runs, 10);
            assert_eq!(cfg.name, mtgcn::config::network_label(&cfg.tasks));
            seen.insert((cfg.tasks.ae, cfg.tasks.fr, cfg.tasks.er));
        }
        assert_eq!(seen.len(), 7);
        assert!(!seen.contains(&(false, true, true)));
    }
}

#[test]
fn every_checked_in_config_and_grid_parses() {
    let tmp = tempfile::tempdir().unwrap();
    let meta = tmp.path().join("m");
    meta_only(&meta, "cora", 1433, 7);
    let mut configs = 0;
    for dir in ["cora", "citeseer", "toy"] {
        for entry in fs::read_dir(workspace().join("configs").join(dir)).unwrap() {
            let path = entry.unwrap().path();
            if dir == "toy" {
                parse_config_with(&path, &ConfigOverrides::default()).unwrap();
            } else {
                parse_with_dataset(&path, &meta);
            }
            configs += 1;
        }
    }
    assert!(configs >= 16);
    for entry in fs::read_dir(workspace().join("configs/grids")).unwrap() {
        let path = entry.unwrap().path();
        let g = GridSpec::read(&path).unwrap();
        assert!(!g.points().unwrap().is_empty(), "{}", path.display());
    }
}

#[test]
fn fr_count_grids_cover_both_readings() {
    let g = |f: &str| GridSpec::read(&workspace().join("configs/grids").join(f)).unwrap();
    let zeroed = g("fr-zeroed.toml").fr_corrupted_count.unwrap();
    assert_eq!(zeroed, vec![100, 200, 400, 800]);
    for (file, d) in [("fr-kept-cora.toml", 1433), ("fr-kept-citeseer.toml", 3703)] {
        let kept: Vec<usize> = g(file).fr_corrupted_count.unwrap().iter().map(|c| d - c).collect();
        assert_eq!(kept, zeroed, "{file}");
    }
    // 3703 features with 100 kept leaves 3603 zeroed.
    assert_eq!(g("fr-kept-citeseer.toml").fr_corrupted_count.unwrap()[0], 3603);
    assert_eq!(g("fr-zeroed.toml").points().unwrap().len(), 8);
    assert_eq!(g("er.toml").points().unwrap().len(), 6);
}

fn toy() -> PreparedData {
    let spec = PlantedPartition {
        features: 24,
        ..Default::default()
    };
    PreparedData::new(planted_partition(&spec, 5).unwrap(), true).unwrap()
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        epochs: 25,
        runs: 2,
        seed: 10,
        ..ExperimentConfig::with_dataset("unused")
    }
}

#[test]
fn singleton_grid_equals_direct_aggregation() {
    let data = toy();
    let cfg = small_config();
    let grid = run_grid(&cfg, &GridSpec::default(), &data).unwrap();
    let direct = aggregate(
        &train_runs(&data, &cfg)
            .unwrap()
            .into_iter()
            .map(|o| o.report)
            .collect::<Vec<_>>(),
    )
    .unwrap();
    assert_eq!(grid.points.len(), 1);
    assert_eq!(grid.winner.unwrap().aggregate, direct);
}

#[test]
fn failed_points_are_flagged_and_skipped() {
    let data = toy();
    let cfg = ExperimentConfig {
        tasks: mtgcn::model::AuxTasks {
            ae: false,
            fr: true,
            er: false,
        },
        ..small_config()
    };
    let grid = GridSpec {
        fr_corrupted_count: Some(vec![4, 24, 8]),
        ..Default::default()
    };
    let res = run_grid(&cfg, &grid, &data).unwrap();
    assert_eq!(res.points.len(), 3);
    match &res.points[1].outcome {
        PointOutcome::Failed { error } => assert!(error.contains("fr.corrupted_count"), "{error}"),
        other => panic!("expected failure, got {other:?}"),
    }
    assert_eq!(res.ranking.len(), 2);
    assert!(!res.ranking.contains(&1));
    let w = res.winner.as_ref().unwrap();
    assert_eq!(w.index, res.ranking[0]);

    // Only the winner carries test accuracies.
    let json = serde_json::to_value(&res).unwrap();
    let points = json["points"].as_array().unwrap();
    assert!(points.iter().all(|p| !p.to_string().contains("test_acc")));
    assert!(json["winner"].to_string().contains("test_acc"));
}

#[test]
fn bundle_on_disk_trains_like_in_memory() {
    let data = toy();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&data.bundle, dir.path()).unwrap();
    let loaded = load_bundle(dir.path()).unwrap();
    assert_eq!(loaded, data.bundle);
    let cfg = small_config();
    let a = train_runs(&data, &cfg).unwrap();
    let b = train_runs(&PreparedData::new(loaded, true).unwrap(), &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.report.to_json(), y.report.to_json());
    }
}

#[test]
fn report_matches_documented_schema() {
    let data = toy();
    let cfg = small_config();
    let agg = aggregate(&train_runs(&data, &cfg).unwrap().into_iter().map(|o| o.report).collect::<Vec<_>>()).unwrap();
    let base = NetworkResult::new(&cfg, "toy", agg.clone());
    let mut other = NetworkResult::new(&cfg, "toy", agg);
    other.network = "main+AE".into();
    other.baseline = false;
    let report = serde_json::to_value(build_report(&[base, other]).unwrap()).unwrap();

    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(workspace().join("docs/report.schema.json")).unwrap()).unwrap();
    let item = &schema["items"];
    let required: Vec<&str> = item["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let props = item["properties"].as_object().unwrap();
    for entry in report.as_array().unwrap() {
        let obj = entry.as_object().unwrap();
        for key in &required {
            assert!(obj.contains_key(*key), "missing {key}");
        }
        for (key, value) in obj {
            let ty = &props.get(key).unwrap_or_else(|| panic!("undocumented key {key}"))["type"];
            let ok = |t: &str| match t {
                "string" => value.is_string(),
                "number" => value.is_number(),
                "integer" => value.is_u64(),
                "array" => value.is_array(),
                "null" => value.is_null(),
                other => panic!("schema type {other}"),
            };
            let valid = match ty {
                serde_json::Value::String(t) => ok(t),
                serde_json::Value::Array(ts) => ts.iter().any(|t| ok(t.as_str().unwrap())),
                _ => panic!("bad schema for {key}"),
            };
            assert!(valid, "{key} = {value}");
        }
        let run_keys = props["runs"]["items"]["required"].as_array().unwrap();
        for run in obj["runs"].as_array().unwrap() {
            for k in run_keys {
                assert!(run.get(k.as_str().unwrap()).is_some());
            }
        }
    }
    assert_eq!(report[0]["delta_pp_vs_baseline"], 0.0);
}
