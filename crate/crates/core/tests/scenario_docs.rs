use pfcnoise::harness::Scenario;

const DOC: &str = include_str!("../../../docs/scenario.toml");

#[test]
fn annotated_example_matches_defaults() {
    let doc = Scenario::from_toml_str(DOC).unwrap().normalized().unwrap();
    assert_eq!(doc, Scenario::default().normalized().unwrap());
}

#[test]
fn commented_defense_blocks_parse() {
    for kind in ["random_noise", "random_power"] {
        let start = DOC.find(&format!("# kind = \"{kind}\"")).unwrap();
        let block: String = DOC[start..]
            .lines()
            .take_while(|l| l.starts_with("# ") && !l.starts_with("# [") || l.starts_with("# kind"))
            .map(|l| l.trim_start_matches("# ").to_string() + "\n")
            .collect();
        let s = Scenario::from_toml_str(&format!("[[transmitters]]\n[transmitters.defense]\n{block}")).unwrap();
        assert!(s.transmitters[0].defense.is_some(), "{block}");
    }
}
