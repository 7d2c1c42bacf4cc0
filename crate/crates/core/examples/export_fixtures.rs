//! Regenerate the on-disk fixture corpus under `fixtures/` at the workspace
//! root: one `<id>.scenario.json` (the scenario alone, loadable by the CLI)
//! and one `<id>.expected.json` (everything the pipeline should say about
//! it) per example. Run from anywhere in the workspace:
//!
//! ```text
//! cargo run -p docalc --example export_fixtures
//! ```
//!
//! Output is deterministic byte-for-byte; `tests/fixture_files.rs` fails if
//! the checked-in files drift from what this prints.

use std::fs;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    fs::create_dir_all(&dir).expect("create fixtures directory");

    let fixtures = docalc::corpus::all_examples().expect("corpus generates");
    for fixture in &fixtures {
        let scenario_text = docalc::emit::json_string(&fixture.scenario);
        fs::write(dir.join(format!("{}.scenario.json", fixture.id)), scenario_text)
            .expect("write scenario file");

        let mut value = serde_json::to_value(fixture).expect("fixture serializes");
        value
            .as_object_mut()
            .expect("fixture is a JSON object")
            .remove("scenario");
        let expected_text = docalc::emit::json_string(&value);
        fs::write(dir.join(format!("{}.expected.json", fixture.id)), expected_text)
            .expect("write expectation file");
    }
    println!("wrote {} fixtures to {}", fixtures.len(), dir.display());
}
