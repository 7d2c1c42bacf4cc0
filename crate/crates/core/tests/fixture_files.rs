//! The checked-in `fixtures/` directory must stay in lockstep with the
//! generated corpus. Regenerate with:
//!
//! ```text
//! cargo run -p docalc --example export_fixtures
//! ```

use std::fs;
use std::path::PathBuf;

use docalc::scenarios::{scenario_from_json, Scenario};

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn fixture_files_match_the_generated_corpus() {
    let dir = fixtures_dir();
    let fixtures = docalc::corpus::all_examples().unwrap();
    let mut expected_names = Vec::new();

    for fixture in &fixtures {
        let scenario_path = dir.join(format!("{}.scenario.json", fixture.id));
        let on_disk = fs::read_to_string(&scenario_path)
            .unwrap_or_else(|e| panic!("{}: {e}", scenario_path.display()));
        assert_eq!(
            on_disk,
            docalc::emit::json_string(&fixture.scenario),
            "{} drifted; re-run the export_fixtures example",
            scenario_path.display()
        );

        let expected_path = dir.join(format!("{}.expected.json", fixture.id));
        let on_disk = fs::read_to_string(&expected_path)
            .unwrap_or_else(|e| panic!("{}: {e}", expected_path.display()));
        let mut value = serde_json::to_value(fixture).unwrap();
        value.as_object_mut().unwrap().remove("scenario");
        assert_eq!(
            on_disk,
            docalc::emit::json_string(&value),
            "{} drifted; re-run the export_fixtures example",
            expected_path.display()
        );

        expected_names.push(format!("{}.scenario.json", fixture.id));
        expected_names.push(format!("{}.expected.json", fixture.id));
    }

    // No stray files: everything in the directory is accounted for.
    let mut on_disk: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    on_disk.sort();
    expected_names.sort();
    assert_eq!(on_disk, expected_names);
}

#[test]
fn fixture_scenario_files_load_through_the_public_loader() {
    for fixture in docalc::corpus::all_examples().unwrap() {
        let path = fixtures_dir().join(format!("{}.scenario.json", fixture.id));
        let text = fs::read_to_string(&path).unwrap();
        let loaded = scenario_from_json(&text)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let same_regime = matches!(
            (&loaded, &fixture.scenario),
            (Scenario::Quantum(_), Scenario::Quantum(_))
                | (Scenario::Classical(_), Scenario::Classical(_))
        );
        assert!(same_regime, "{} loaded into the wrong regime", fixture.id);
        assert_eq!(loaded.name(), fixture.scenario.name(), "{}", fixture.id);
    }
}
