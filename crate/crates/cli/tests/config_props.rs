use emcomm_cli::{GridSpec, RunConfig, KEYS};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unknown_keys_are_rejected(key in "[a-z_]{1,14}") {
        prop_assume!(!KEYS.contains(&key.as_str()));
        let mut t = toml::Table::new();
        t.insert(key.clone(), toml::Value::Integer(1));
        let err = RunConfig::from_table(t).unwrap_err();
        prop_assert_eq!(err.exit_code(), 1);
        prop_assert!(err.to_string().contains(&key));
    }

    #[test]
    fn grid_size_is_the_product_of_list_lengths(
        lrs in proptest::collection::vec(0.001f64..0.1, 1..4),
        seeds in proptest::collection::vec(0i64..1000, 1..4),
        vocab in proptest::collection::vec(2i64..12, 1..3),
    ) {
        let mut sweep = toml::Table::new();
        let list = |xs: Vec<toml::Value>| toml::Value::Array(xs);
        sweep.insert("lr".into(), list(lrs.iter().map(|&x| x.into()).collect()));
        sweep.insert("seed".into(), list(seeds.iter().map(|&x| x.into()).collect()));
        sweep.insert("vocab_size".into(), list(vocab.iter().map(|&x| x.into()).collect()));
        let mut t = toml::Table::new();
        t.insert("sweep".into(), toml::Value::Table(sweep));
        let spec = GridSpec::from_table(t).unwrap();
        let children = spec.expand().unwrap();
        prop_assert_eq!(children.len(), lrs.len() * seeds.len() * vocab.len());
        prop_assert_eq!(spec.len(), children.len());
        let mut dirs: Vec<_> = children.iter().map(|(_, c)| c.out_dir.clone()).collect();
        dirs.dedup();
        prop_assert_eq!(dirs.len(), children.len());
    }

    #[test]
    fn sweeping_an_unknown_key_is_rejected(key in "[a-z]{3,10}") {
        prop_assume!(!KEYS.contains(&key.as_str()));
        let mut sweep = toml::Table::new();
        sweep.insert(key, toml::Value::Array(vec![1.into()]));
        let mut t = toml::Table::new();
        t.insert("sweep".into(), toml::Value::Table(sweep));
        prop_assert!(GridSpec::from_table(t).is_err());
    }
}
