use rate_eval::simulate::*;
use rate_eval::weights::WeightSpec;

fn main() {
    // Pilot of criterion 6 at 150 reps.
    let cfg = PowerConfig { reps: 150, bootstrap_replicates: 200, level: 0.95,
        seed: 0xC0FFEE06, rule: PowerRule::Bundled, ..Default::default() };
    for p in [0.1, 1.0] {
        let scen = Scenario { kind: ScenarioKind::Kink { p, noise_is_sd: false }, n: 400, seed: 0 };
        let cells = vec![
            (scen.clone(), WeightSpec::autoc()),
            (scen, WeightSpec::qini_uncentered().rescaled()),
        ];
        let r = power_study(&cells, &cfg).unwrap();
        println!("p={p}: autoc power={} ({:+.3}), qini_unc power={} ({:+.3})",
            r.rows[0].power, r.rows[0].mean_estimate, r.rows[1].power, r.rows[1].mean_estimate);
    }
}
