use gossip_rmf::exact::exact_expected_series;
use gossip_rmf::popsim::simulate_measure_runs;
use gossip_rmf::*;

/// The count-level simulator reproduces the exact law of the chain: the
/// Monte Carlo mean of each occupancy stays within 4 standard errors of
/// the exact expectation.
#[test]
fn popsim_mean_matches_exact_law() {
    let params = GossipParams::new(500, 100, 50, 3, 10).unwrap();
    for kind in [ModelKind::ThreeState, ModelKind::SixState] {
        let model = build_model(kind, &params).unwrap();
        let n = model.n_states();
        let mut c = vec![0u64; n];
        c[1] = 2;
        c[2] = 8;
        let counts0 = CountVector::new(c).unwrap();
        let t_max = 12;
        let exact = exact_expected_series(&model, &counts0, t_max).unwrap();
        let indicators: Vec<Measure> = (0..n)
            .map(|i| {
                let mut w = vec![0.0; n];
                w[i] = 1.0;
                Measure::Linear(w)
            })
            .collect();
        let runs = 20_000;
        let series = simulate_measure_runs(
            &model,
            &counts0,
            t_max,
            runs,
            5,
            &indicators,
            Execution::default(),
        );
        for (i, per_run) in series.iter().enumerate() {
            let stats = gossip_rmf::stats::SimStats::from_runs(per_run, 5);
            for (t, e) in exact.iter().enumerate() {
                let se = stats.std_error(t).max(1e-12);
                let z = (stats.mean[t] - e[i]).abs() / se;
                assert!(
                    z < 4.0,
                    "{kind} state {i} t {t}: sim {} exact {} z {z}",
                    stats.mean[t],
                    e[i]
                );
            }
        }
    }
}
