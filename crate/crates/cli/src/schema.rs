use std::sync::OnceLock;

use jsonschema::Validator;
use serde_json::Value;

pub const REPORT_SCHEMA: &str = include_str!("../schema/analysis_report.schema.json");

fn validator() -> &'static Validator {
    static V: OnceLock<Validator> = OnceLock::new();
    V.get_or_init(|| {
        let schema: Value =
            serde_json::from_str(REPORT_SCHEMA).expect("bundled schema is valid JSON");
        jsonschema::validator_for(&schema).expect("bundled schema compiles")
    })
}

/// Every violation of the report schema, as `path: message` lines.
pub fn report_violations(report: &Value) -> Vec<String> {
    validator()
        .iter_errors(report)
        .map(|e| format!("{}: {e}", e.instance_path))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use infodyn::dynamics::{self, AnalysisConfig};
    use infodyn::midi::BarVector;
    use infodyn::mine::MineConfig;
    use infodyn::vae::VaeParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn report() -> Value {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let patterns: Vec<Vec<u8>> = (0..3)
            .map(|_| (0..20).map(|_| rng.random_bool(0.4) as u8).collect())
            .collect();
        let bars: Vec<BarVector> = (0..40)
            .map(|t| BarVector {
                values: patterns[t % 3].clone(),
                bar_index: t,
            })
            .collect();
        let params = VaeParams::init(20, 4, None, &mut rng);
        let cfg = AnalysisConfig {
            rates: vec![2, 8],
            theta_candidates: 4,
            mine: MineConfig {
                epochs: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = dynamics::analyze(&bars, &params, "toy", &cfg).unwrap();
        serde_json::from_str(&r.to_json().unwrap()).unwrap()
    }

    #[test]
    fn real_report_validates() {
        let v = report_violations(&report());
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn mutated_reports_fail() {
        let base = report();

        let mut r = base.clone();
        r["surprisal_comparative_only"] = Value::Bool(false);
        assert!(!report_violations(&r).is_empty());

        let mut r = base.clone();
        r["rates"][0]["mi"]["bits"] = Value::from(-1.0);
        assert!(!report_violations(&r).is_empty());

        let mut r = base.clone();
        r.as_object_mut().unwrap().remove("units_note");
        assert!(!report_violations(&r).is_empty());

        let mut r = base;
        r["schema_version"] = Value::from("0.9");
        let v = report_violations(&r);
        assert!(v.iter().any(|m| m.starts_with("/schema_version")), "{v:?}");
    }
}
