use annoteval::config::Config;
use annoteval::equivalence::BootstrapConfig;

fn load(name: &str) -> Config {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Config::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn shipped_default_matches_built_in_defaults() {
    let cfg = load("default.toml");
    let built_in = Config::default();
    assert_eq!(cfg.experiment, built_in.experiment);
    assert_eq!(cfg.tests, built_in.tests);
    assert_eq!(cfg.bootstrap, BootstrapConfig::default());
    assert_eq!(cfg.profiles.iter().map(|p| p.count).sum::<usize>(), 30);
}

#[test]
fn shipped_flip_config_is_valid() {
    let cfg = load("method_b.toml");
    assert!(cfg.flip.is_some());
    assert!(cfg.profiles.is_empty());
}

#[test]
fn round_trip_through_toml() {
    let cfg = load("default.toml");
    assert_eq!(Config::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
}
