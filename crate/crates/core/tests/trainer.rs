use marginprop::data::{gen_separable, gen_xor, generate_split};
use marginprop::trainer::{
    accuracy, evaluate, gamma_grid, init_mlp, l1_cost, train, train_model, Batch, GammaInit, TrainConfig, SEED_ENV,
};
use marginprop::{Error, ModelKind};

#[test]
fn config_parsing() {
    let kv = TrainConfig::parse("epochs = 7\nbatch = 8 # mini\ngamma_init = [0.5, 2]\nanneal = false\n").unwrap();
    assert_eq!(kv.epochs, 7);
    assert_eq!(kv.batch, Batch::Size(8));
    assert_eq!(kv.gamma_init, Some(GammaInit::Many(vec![0.5, 2.0])));
    assert!(!kv.anneal);
    let json = TrainConfig::parse(r#"{"epsilon": 0.5, "batch": "full", "gamma_init": 3}"#).unwrap();
    assert_eq!(json.epsilon, 0.5);
    assert_eq!(json.gamma_init, Some(GammaInit::One(3.0)));
    for bad in ["epochs = 0", "epsilon = -1", "unknown = 1", "gamma_init = [0, 1]", "batch = 0", "nonsense"] {
        assert!(matches!(TrainConfig::parse(bad), Err(Error::InvalidConfig(_)) | Err(Error::NonPositiveGamma(_))), "{bad}");
    }
}

#[test]
fn per_kind_defaults_survive_partial_configs() {
    let svm = TrainConfig::parse_for(ModelKind::MpSvm, "epochs = 3").unwrap();
    assert_eq!(svm.epsilon, TrainConfig::for_kind(ModelKind::MpSvm).epsilon);
    assert_eq!(svm.epochs, 3);
    let explicit = TrainConfig::parse_for(ModelKind::MpSvm, "epsilon = 0.2").unwrap();
    assert_eq!(explicit.epsilon, 0.2);
}

#[test]
fn gamma_grid_is_log_spaced() {
    let g = gamma_grid();
    assert_eq!(g.len(), 13);
    assert!((g[0] - 0.1).abs() < 1e-12 && (g[12] - 10.0).abs() < 1e-9 && (g[6] - 1.0).abs() < 1e-12);
    assert!(g.windows(2).all(|w| (w[1] / w[0] - 10f64.powf(1.0 / 6.0)).abs() < 1e-9));
}

#[test]
fn l1_cost_examples() {
    assert_eq!(l1_cost(&[(1.0, 0.0), (0.5, 0.5)], &[(1.0, 0.0), (0.0, 1.0)]).unwrap(), 1.0);
    assert!(matches!(l1_cost(&[(1.0, 0.0)], &[]), Err(Error::LengthMismatch(1, 0))));
}

#[test]
fn perceptron_learns_the_separable_set() {
    let (tr, te) = generate_split(gen_separable, 100, 100, 0).unwrap();
    let (m, curve) = train(ModelKind::MpPerceptron, &tr, &TrainConfig::default()).unwrap();
    assert_eq!(accuracy(&m, &tr).unwrap(), 1.0);
    assert_eq!(accuracy(&m, &te).unwrap(), 1.0);
    assert_eq!(curve.len(), 500);
    let e = evaluate(&m, &te).unwrap();
    assert_eq!((e.plus, e.minus), (Some(1.0), Some(1.0)));
}

#[test]
fn annealing_never_raises_the_cost_it_accepts() {
    let (tr, _) = generate_split(gen_xor, 60, 4, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        hidden: 6,
        ..TrainConfig::default()
    };
    let (_, curve) = train(ModelKind::MpMlp, &tr, &cfg).unwrap();
    assert!(curve.points.iter().all(|p| p.gammas.iter().all(|&g| g > 0.0)));
    let mut out = Vec::new();
    curve.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("epoch,cost,acc,gammas\n"));
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn grid_search_picks_a_grid_gamma() {
    let (tr, _) = generate_split(gen_xor, 40, 4, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        hidden: 4,
        grid_search: true,
        ..TrainConfig::default()
    };
    let init = init_mlp(&tr, &cfg).unwrap();
    let (m, _) = train_model(init, &tr, &cfg).unwrap();
    let grid = gamma_grid();
    assert!(grid.contains(&m.gamma_j) && m.gamma_j == m.gamma_k);
}

#[test]
fn threads_do_not_change_results() {
    let (tr, _) = generate_split(gen_xor, 60, 4, 3).unwrap();
    let base = TrainConfig {
        epochs: 15,
        hidden: 5,
        ..TrainConfig::default()
    };
    let threaded = TrainConfig { threads: 3, ..base.clone() };
    assert_eq!(train(ModelKind::MpMlp, &tr, &base).unwrap(), train(ModelKind::MpMlp, &tr, &threaded).unwrap());
}

#[test]
fn seed_environment_override() {
    std::env::set_var(SEED_ENV, "77");
    let cfg = TrainConfig::default().with_env_seed();
    std::env::set_var(SEED_ENV, "x");
    let bad = TrainConfig::default().with_env_seed();
    std::env::remove_var(SEED_ENV);
    assert_eq!(cfg.unwrap().seed, 77);
    assert!(bad.is_err());
}
