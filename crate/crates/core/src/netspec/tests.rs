use super::*;
use crate::dropout::DropoutConfig;

fn two_pool_net() -> NetworkSpec {
    zoo::block_mlp(2, 8, 3, 3)
}

#[test]
fn two_pools_give_three_exits() {
    let me = place_exits(&two_pool_net(), &default_head_template()).unwrap();
    assert_eq!(me.n_exit(), 3);
    let depths: Vec<usize> = me.exits.iter().map(|e| me.attach_depth(e).unwrap()).collect();
    assert!(depths.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(me.exits[0].attach_after, "pool1");
    assert_eq!(me.exits[1].attach_after, "pool2");
    // final exit keeps the original classifier head
    assert_eq!(me.exits[2].head_layers[0].id, "classifier");
    // flat block output: the template's global pool is dropped
    assert_eq!(me.exits[0].head_layers.len(), 2);
    assert!(validate(&me).is_empty());
}

#[test]
fn no_pool_degrades_to_single_exit() {
    let net = zoo::mlp(4, &[3], 2);
    let me = place_exits(&net, &default_head_template()).unwrap();
    assert_eq!(me.n_exit(), 1);
    assert_eq!(me.exits[0].head_layers, net.layers[2..].to_vec());
    assert_eq!(me.exits[0].attach_after, "relu1");
}

#[test]
fn vgg11_has_six_exits() {
    // five pooling stages in the VGG-11 "A" configuration
    let net = zoo::vgg11(32, 16, 10);
    let me = place_exits(&net, &default_head_template()).unwrap();
    assert_eq!(me.n_exit(), 6);
}

#[test]
fn lenet5_layer_count() {
    // conv, relu, pool ×2, flatten, (dense, relu) ×2, dense, softmax
    let net = zoo::lenet5(10);
    let reloaded = load_network(&net.to_json()).unwrap();
    assert_eq!(reloaded.layers.len(), 13);
    let me = place_exits(&reloaded, &default_head_template()).unwrap();
    assert_eq!(me.n_exit(), 3);
    // conv block outputs get the global-average-pool head
    assert_eq!(me.exits[0].head_layers[0].kind(), LayerKind::GlobalAvgPool);
}

#[test]
fn unadaptable_head_template_is_rejected() {
    // a dense layer directly on a conv block output cannot be adapted
    let template = vec![LayerSpec::dense("fc", 1, 1), LayerSpec::softmax("s")];
    assert!(place_exits(&zoo::lenet5(10), &template).is_err());
}

#[test]
fn depth_one_gives_one_site_per_exit() {
    let me = place_exits(&two_pool_net(), &default_head_template()).unwrap();
    let bayes = insert_dropout(&me, DropoutConfig::mcd(0.75), 1).unwrap();
    let sites = bayes.dropout_sites().unwrap();
    assert_eq!(sites.len(), 3);
    assert!(sites
        .iter()
        .all(|s| matches!(s.location, SiteLocation::Head { .. })));
    assert!(bayes.partial_dropout);
    assert_eq!(bayes.dropout_layer_count(), 3);
}

#[test]
fn depth_zero_is_an_error() {
    let me = place_exits(&two_pool_net(), &default_head_template()).unwrap();
    assert!(insert_dropout(&me, DropoutConfig::mcd(0.75), 0).is_err());
}

#[test]
fn depth_two_spills_into_trunk_of_each_exit() {
    // exit 1 head = [fc, softmax]: the second site lands before trunk layer fc1
    let me = place_exits(&two_pool_net(), &default_head_template()).unwrap();
    let bayes = insert_dropout(&me, DropoutConfig::mcd(0.75), 2).unwrap();
    let e1 = &bayes.exits[0];
    assert_eq!(e1.trunk_dropout.len(), 1);
    assert_eq!(e1.trunk_dropout[0].before, "fc1");
    // later exits keep their own segments: exit 2 spills before fc2, not fc1
    assert_eq!(bayes.exits[1].trunk_dropout[0].before, "fc2");
    assert_eq!(bayes.exits[2].trunk_dropout[0].before, "fc3");
    // exit 1's trunk site precedes its own attach point
    assert!(!bayes.partial_dropout);
    assert!(validate(&bayes).is_empty());
}

#[test]
fn depth_beyond_path_is_an_error() {
    let me = place_exits(&two_pool_net(), &default_head_template()).unwrap();
    // exit 1 path: fc1 + head fc = 2 learnable layers
    assert!(insert_dropout(&me, DropoutConfig::mcd(0.75), 3).is_err());
}

#[test]
fn insert_dropout_is_idempotent() {
    let me = place_exits(&two_pool_net(), &default_head_template()).unwrap();
    let cfg = DropoutConfig::masksembles(2, 1.5);
    let once = insert_dropout(&me, cfg, 2).unwrap();
    let twice = insert_dropout(&once, cfg, 2).unwrap();
    assert_eq!(once, twice);
}

#[test]
fn validate_reports_duplicate_id() {
    let mut me = place_exits(&two_pool_net(), &default_head_template()).unwrap();
    me.exits[0].head_layers[0].id = "fc2".into();
    let diags = validate(&me);
    assert_eq!(diags.len(), 1, "{:?}", diags);
    assert_eq!(diags[0].subject, "fc2");
}

#[test]
fn validate_reports_partial_violation() {
    let me = place_exits(&two_pool_net(), &default_head_template()).unwrap();
    let mut bayes = insert_dropout(&me, DropoutConfig::mcd(0.5), 1).unwrap();
    bayes.exits[0].trunk_dropout.push(TrunkDropout {
        id: "early_drop".into(),
        before: "fc1".into(),
    });
    assert!(bayes.partial_dropout);
    let diags = validate(&bayes);
    assert_eq!(diags.len(), 1, "{:?}", diags);
    assert_eq!(diags[0].subject, "early_drop");
}

#[test]
fn multi_exit_document_round_trip() {
    let me = place_exits(&two_pool_net(), &default_head_template()).unwrap();
    let bayes = insert_dropout(&me, DropoutConfig::masksembles(2, 1.5), 2).unwrap();
    let text = bayes.to_json();
    assert_eq!(load_multi_exit(&text).unwrap(), bayes);
    assert!(load_network(&text).is_err());
}

#[test]
fn select_exits_keeps_deepest() {
    let me = place_exits(&two_pool_net(), &default_head_template()).unwrap();
    let two = select_exits(&me, 2).unwrap();
    assert_eq!(two.n_exit(), 2);
    assert_eq!(two.exits[0].attach_after, "pool2");
    assert_eq!(two.exits[0].head_layers[0].id, "exit1_fc");
    assert!(select_exits(&me, 4).is_err());
}

#[test]
fn scale_channels_reinfers_widths() {
    let net = zoo::block_mlp(2, 8, 3, 3);
    let half = scale_channels(&net, 0.5).unwrap();
    assert_eq!(half.class_count().unwrap(), 3);
    match half.layers[0].op {
        LayerOp::Dense(p) => assert_eq!(p.out_features, 4),
        _ => unreachable!(),
    }
    assert!(scale_channels(&zoo::block_mlp(2, 4, 3, 3), 0.125).is_err());
}

#[test]
fn flops_are_additive_under_concat() {
    let a = NetworkSpec::new(vec![4], vec![LayerSpec::dense("a", 4, 6), LayerSpec::relu("r")]);
    let b = NetworkSpec::new(vec![6], vec![LayerSpec::dense("b", 6, 2), LayerSpec::softmax("s")]);
    let ab = a.concat(&b).unwrap();
    assert_eq!(ab.flops().unwrap(), a.flops().unwrap() + b.flops().unwrap());
}
