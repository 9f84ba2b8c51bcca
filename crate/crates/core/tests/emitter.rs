use std::collections::BTreeMap;

use mcme::dropout::{generate_masks, DropoutConfig, DropoutKind};
use mcme::emitter::*;
use mcme::explorer::DesignPoint;
use mcme::mapping::{build_mapping, estimate_latency, estimate_resources, HardwareModel};
use mcme::metrics::count_flops;
use mcme::netspec::{default_head_template, insert_dropout, place_exits, select_exits, zoo, MultiExitSpec};

fn spec(cfg: DropoutConfig, n_exit: usize) -> MultiExitSpec {
    let me = place_exits(&zoo::block_mlp(2, 8, 3, 3), &default_head_template()).unwrap();
    insert_dropout(&select_exits(&me, n_exit).unwrap(), cfg, 1).unwrap()
}

fn build(me: &MultiExitSpec, n_pass: usize, engines: usize, bits: Option<u32>, hw: &HardwareModel) -> AcceleratorPlan {
    let dp = DesignPoint::for_spec(me, n_pass, bits, engines, None).unwrap();
    let plan = build_mapping(dp.n_sample(), engines).unwrap();
    let flops = count_flops(me).unwrap();
    let est = Estimates {
        latency: estimate_latency(&plan, &flops, hw),
        resources: estimate_resources(&plan, me, hw),
        flops,
        metrics: None,
    };
    emit_plan(&dp, &plan, me, None, &est, hw, 42).unwrap()
}

#[test]
fn single_exit_mcd_has_one_rng_unit() {
    let me = spec(DropoutConfig::mcd(0.75), 1);
    let p = build(&me, 3, 1, None, &HardwareModel::default());
    assert_eq!(p.dropout_units.len(), 1);
    assert!(matches!(p.dropout_units[0].params, DropoutUnitParams::Mcd { keep_rate, .. } if keep_rate == 0.75));
    assert!(p.dropout_units.iter().all(|u| !matches!(u.params, DropoutUnitParams::Masksembles { .. })));
}

#[test]
fn masksembles_table_is_passed_through() {
    // block width 8: every site masks F = 8 features
    let me = spec(DropoutConfig::masksembles(4, 1.0), 3);
    let p = build(&me, 2, 2, Some(8), &HardwareModel::default());
    let expected = generate_masks(8, 4, 1.0).unwrap();
    assert_eq!(p.dropout_units.len(), 3);
    for u in &p.dropout_units {
        match &u.params {
            DropoutUnitParams::Masksembles { masks } => {
                assert_eq!(masks.rows.len(), 4);
                assert_eq!(masks.to_mask_set().unwrap(), expected);
            }
            _ => panic!("expected mask table"),
        }
    }
}

#[test]
fn supplied_masks_must_match_the_site() {
    let me = spec(DropoutConfig::masksembles(4, 1.0), 1);
    let hw = HardwareModel::default();
    let dp = DesignPoint::for_spec(&me, 2, None, 1, None).unwrap();
    let plan = build_mapping(2, 1).unwrap();
    let flops = count_flops(&me).unwrap();
    let est = Estimates {
        latency: estimate_latency(&plan, &flops, &hw),
        resources: estimate_resources(&plan, &me, &hw),
        flops,
        metrics: None,
    };
    let site = me.dropout_sites().unwrap()[0].id.clone();
    let mut masks = BTreeMap::new();
    masks.insert(site, generate_masks(12, 4, 1.0).unwrap());
    assert!(emit_plan(&dp, &plan, &me, Some(&masks), &est, &hw, 0).is_err());
}

#[test]
fn inconsistent_inputs_are_diagnosed() {
    let me = spec(DropoutConfig::mcd(0.5), 3);
    let hw = HardwareModel::default();
    let mut dp = DesignPoint::for_spec(&me, 2, None, 2, None).unwrap();
    let plan = build_mapping(6, 2).unwrap();
    let flops = count_flops(&me).unwrap();
    let est = Estimates {
        latency: estimate_latency(&plan, &flops, &hw),
        resources: estimate_resources(&plan, &me, &hw),
        flops,
        metrics: None,
    };
    dp.n_exit = 2;
    let err = emit_plan(&dp, &plan, &me, None, &est, &hw, 0).unwrap_err().to_string();
    assert!(err.contains("exits"), "{}", err);
    dp.n_exit = 3;
    dp.dropout_kind = DropoutKind::Masksembles;
    assert!(emit_plan(&dp, &plan, &me, None, &est, &hw, 0).is_err());
}

#[test]
fn every_layer_appears_once() {
    let me = spec(DropoutConfig::mcd(0.5), 3);
    let p = build(&me, 2, 3, None, &HardwareModel::default());
    let mut ids: Vec<&str> = p.layers.iter().map(|l| l.id.as_str()).collect();
    let expected: Vec<String> = me.all_layers().into_iter().map(|(_, l)| l.id).collect();
    assert_eq!(ids.len(), expected.len());
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), expected.len());
    assert!(p.layers.iter().all(|l| l.pipeline));
    for u in &p.dropout_units {
        assert!(p.layers.iter().any(|l| l.id == u.layer_id));
    }
}

#[test]
fn emission_is_deterministic_and_round_trips() {
    let me = spec(DropoutConfig::masksembles(4, 2.0), 3);
    let hw = HardwareModel::default();
    let a = build(&me, 2, 2, Some(6), &hw);
    let b = build(&me, 2, 2, Some(6), &hw);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(parse_plan(&a.to_json()).unwrap(), a);
    let mcd = build(&spec(DropoutConfig::mcd(0.625), 2), 3, 2, None, &hw);
    assert_eq!(parse_plan(&mcd.to_json()).unwrap(), mcd);
}

#[test]
fn report_lists_each_layer_and_warns_over_budget() {
    let me = spec(DropoutConfig::mcd(0.5), 3);
    let mut hw = HardwareModel::default();
    let p = build(&me, 2, 1, None, &hw);
    let text = render_report(&p);
    for l in &p.layers {
        let n = text.lines().filter(|line| line.split_whitespace().next() == Some(l.id.as_str())).count();
        assert_eq!(n, 1, "layer {}", l.id);
    }
    assert!(!text.contains("OVER BUDGET"));
    // budget for exactly one engine; six engines cannot fit
    hw.budget = hw.engine_cost;
    let p = build(&me, 2, 6, None, &hw);
    assert!(!p.estimates.resources.fits);
    assert!(render_report(&p).contains("WARNING: OVER BUDGET"));
}

#[test]
fn report_matches_golden() {
    let me = spec(DropoutConfig::masksembles(4, 2.0), 3);
    let text = render_report(&build(&me, 2, 2, Some(8), &HardwareModel::default()));
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/plan_report.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden file (run with UPDATE_GOLDEN=1 to create)");
    assert_eq!(text, golden);
}
