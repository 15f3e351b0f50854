use funlasso::bench::{prepare, run_campaign, PipelineConfig};
use funlasso::funspace::Basis;
use funlasso::simgen::{generate_scenario, ScenarioConfig};
use funlasso::tuning::{select_fsl_afsl, Criterion};

fn scenario(n: usize, i: usize, i0: usize) -> ScenarioConfig {
    ScenarioConfig {
        n,
        i,
        i0,
        grid_points: 30,
        replications: 3,
        seed: 17,
        ..Default::default()
    }
}

#[test]
fn strong_signal_support_is_recovered_end_to_end() {
    let ds = generate_scenario(&scenario(200, 60, 4), 0).unwrap();
    let pipe = PipelineConfig::default();
    let prep = prepare(&ds.y, &ds.grid, &pipe).unwrap();
    for criterion in [Criterion::Bic, Criterion::Ebic] {
        let mut path = pipe.path.clone();
        path.criterion = criterion;
        let sel = select_fsl_afsl(&prep.fpc.scores, &ds.x, prep.fpc_basis.clone(), &path).unwrap();
        assert_eq!(sel.afsl.support, ds.support_true, "{criterion:?}");
        assert!(ds.support_true.iter().all(|i| sel.fsl().support.contains(i)));
        assert!(sel.afsl.converged);
    }
}

#[test]
fn basis_files_round_trip() {
    let ds = generate_scenario(&scenario(50, 10, 2), 0).unwrap();
    let prep = prepare(&ds.y, &ds.grid, &PipelineConfig::default()).unwrap();
    for b in [prep.bspline.as_ref(), prep.fpc_basis.as_ref()] {
        let back = Basis::from_text(&b.to_text()).unwrap();
        assert_eq!(&back, b);
    }
    let raw = Basis::raw_grid(ds.grid.clone()).unwrap();
    assert_eq!(Basis::from_text(&raw.to_text()).unwrap(), raw);
}

#[test]
fn campaigns_are_reproducible() {
    let cfg = scenario(60, 20, 2);
    let pipe = PipelineConfig::default();
    let a = run_campaign(&cfg, &pipe).unwrap();
    let b = run_campaign(&cfg, &pipe).unwrap();
    assert_eq!(a.campaign_csv(false), b.campaign_csv(false));
    assert_eq!(a.summary_csv(false), b.summary_csv(false));
    assert_eq!(a.diagnostics_csv(), b.diagnostics_csv());
    assert_eq!(a.records.len(), 2 * cfg.replications);
}

#[test]
fn fpc_scores_reconstruct_smoothed_curves() {
    let ds = generate_scenario(&scenario(40, 5, 1), 1).unwrap();
    let mut pipe = PipelineConfig::default();
    pipe.target_variance = 1.0;
    let prep = prepare(&ds.y, &ds.grid, &pipe).unwrap();
    let rebuilt = prep.fpc.result.reconstruct(&prep.fpc.scores);
    let diff = &rebuilt - &prep.coeffs;
    let white = prep.bspline.whiten_rows(&diff);
    assert!(white.amax() < 1e-8);
}
