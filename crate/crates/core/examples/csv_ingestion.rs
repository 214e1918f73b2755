//! Loading a clinical CSV export through a schema descriptor: typed
//! features, blank cells as missing answers, and precise error locations.
//!
//! ```text
//! cargo run -p modn --example csv_ingestion
//! ```

use modn::data::{encode_answer, load_dataset};

const SCHEMA: &str = r#"{
  "features": [
    {"id": "temperature", "kind": "continuous", "group": 0, "question": "Axillary temperature (C)"},
    {"id": "cough", "kind": "binary", "group": 0, "question": "Cough?"},
    {"id": "pallor", "kind": "categorical", "levels": ["none", "mild", "severe"], "group": 1}
  ],
  "targets": ["pneumonia", "anaemia"],
  "missing_sentinel": "NA",
  "id_column": "patient"
}"#;

const DATA: &str = "\
patient,temperature,cough,pallor,pneumonia,anaemia
p1,38.7,yes,none,1,0
p2,,no,severe,0,1
p3,37.2,NA,,0,0
";

fn main() -> modn::Result<()> {
    let dir = std::env::temp_dir().join("modn-csv-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let (schema_path, data_path) = (dir.join("schema.json"), dir.join("data.csv"));
    std::fs::write(&schema_path, SCHEMA).expect("write schema");
    std::fs::write(&data_path, DATA).expect("write data");

    let table = load_dataset(&data_path, &schema_path)?;
    let stats = table.normalization_stats();
    for r in &table.records {
        println!("{} answered {:?}, labels {:?}", r.id, r.feature_ids().collect::<Vec<_>>(), r.labels);
        for a in &r.answers {
            let f = table.feature(&a.feature_id).expect("schema feature");
            println!("    {:<12} {:>6} -> {:?}", a.feature_id, a.value.to_string(), encode_answer(f, &a.value, stats.get(&f.id))?);
        }
    }

    std::fs::write(&data_path, DATA.replace("severe", "extreme")).expect("write data");
    match load_dataset(&data_path, &schema_path) {
        Err(e) => println!("bad level is reported with its location: {e}"),
        Ok(_) => unreachable!("`extreme` is not a declared level"),
    }
    Ok(())
}
