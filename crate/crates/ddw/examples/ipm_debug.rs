// Experiment: warm-vs-cold totals across full runs, multiple scales.
use ddw::admm::{solve_rdm, AdmmConfig, WarmStart};
use ddw::driver::{DdwAgents, LocalAgents};
use ddw::instgen::{generate_feasible, GenSpec};

fn main() {
    for (nb, vpb, nl) in [(2usize, 4usize, 2usize), (5, 20, 5), (4, 25, 5)] {
        let mut inst_wins = 0;
        let mut checked = 0;
        for seed in 0..20u64 {
            let spec = GenSpec { seed: 100 + seed, num_blocks: nb, vars_per_block: vpb, num_links: nl };
            let (inst, _) = generate_feasible(&spec, 20).unwrap();
            let mut agents = LocalAgents::new(&inst);
            DdwAgents::seed(&mut agents).unwrap();
            let cfg = AdmmConfig::default().with_tolerances(5e-2, 5e-4);
            let mut warm = WarmStart::cold(nb, nl, cfg.rho0);
            let (mut tw, mut tc) = (0usize, 0usize);
            let mut ok = true;
            for outer in 1..100 {
                let run = match solve_rdm(&mut agents, &cfg, warm.clone()) {
                    Ok(r) => r,
                    Err(e) => { println!("scale {nb}x{vpb}x{nl} seed={} FAIL {e}", 100+seed); ok = false; break; }
                };
                if outer > 1 {
                    let mut cold = agents.clone();
                    cold.reset_duals();
                    if let Ok(c) = solve_rdm(&mut cold, &cfg, WarmStart::cold(nb, nl, cfg.rho0)) {
                        tw += run.iterations; tc += c.iterations;
                    }
                }
                warm = WarmStart { pi: run.state.pi.clone(), alpha_blocks: run.state.alpha_blocks.clone(), rho: run.state.rho };
                let u = run.state.u_blocks.clone();
                let prices = agents.price(&run.state.pi, &u, 5e-4).unwrap();
                if !prices.iter().any(|p| p.column.is_some()) || run.iterations == 1 { break; }
            }
            if ok { checked += 1; if tw <= tc { inst_wins += 1; } }
        }
        println!("scale {nb}x{vpb}x{nl}: warm wins {inst_wins}/{checked}");
    }
}
