use gct_core::{evaluability_check, g_formula_quadrature, Plan, ScenarioModel};

fn path(rel: &str) -> String {
    format!("{}/../../scenarios/{rel}", env!("CARGO_MANIFEST_DIR"))
}

fn load(name: &str) -> ScenarioModel {
    ScenarioModel::load(path(&format!("{name}.json"))).unwrap()
}

fn plan(name: &str) -> Plan {
    Plan::load(path(&format!("plans/{name}.json"))).unwrap()
}

#[test]
fn built_in_scenarios_validate() {
    let s1 = load("s1");
    let s2 = load("s2");
    let deg = load("degenerate");
    assert_eq!(s1.id(), Some("s1"));
    assert!(s1.nuc_flag());
    assert!(!s1.rate_l_independent_of_u());
    assert!(!s2.nuc_flag());
    assert!(deg.nuc_flag() && deg.max_rate_l() == 0.0);
    // S2 differs from S1 only in the action rates
    let (c1, c2) = (s1.to_config(), s2.to_config());
    assert_eq!(c1.rate_l, c2.rate_l);
    assert_eq!(c1.y_table, c2.y_table);
    assert_ne!(c1.rate_a, c2.rate_a);
}

#[test]
fn built_in_plans_are_evaluable() {
    for s in ["s1", "s2"] {
        let m = load(s);
        for p in ["periodic", "fixed"] {
            let g = plan(p);
            for l in [vec![], vec![0.31], vec![0.05, 0.4, 0.77]] {
                let r = evaluability_check(&m, &g, &l).unwrap();
                assert!(r.ok && r.first_violation.is_none(), "{s}/{p}/{l:?}");
            }
        }
    }
}

#[test]
fn sub_normalization_accounting() {
    // dist total + leftover within [0.999, 1.001] for every built-in scenario
    for s in ["s1", "s2", "degenerate"] {
        let m = load(s);
        for p in ["periodic", "fixed"] {
            let q = g_formula_quadrature(&m, &plan(p), 60, 4).unwrap();
            let total = q.dist.total() + q.leftover_mass;
            assert!((0.999..=1.001).contains(&total), "{s}/{p}: {total}");
            assert!(q.leftover_mass <= q.poisson_tail_bound + 1e-15);
        }
    }
}

#[test]
fn scenario_round_trips_through_json() {
    let m = load("s1");
    let text = serde_json::to_string(&m.to_config()).unwrap();
    assert_eq!(ScenarioModel::from_json_str(&text).unwrap(), m);
}
