use mander::chain::flip::{apply_flip_set, boundary_components, label_flip_edges, select_flip_set, undo_flips};
use mander::rng::{stream_rng, SEED_PLAN_STREAM};
use mander::score::ChainParams;
use mander::seed::seed_plan;
use mander::{DualGraph, SchedulePoint};
use std::time::Instant;

fn main() {
    let big = DualGraph::grid(25, 40);
    let mut params4 = ChainParams::new(4);
    params4.pop_tolerance = 0.1;
    params4.beta_comp = 0.4;
    let init4 = seed_plan(&big, 4, 0.1, &mut stream_rng(1, SEED_PLAN_STREAM)).unwrap();
    let point = SchedulePoint::from_params(&params4);

    // phase timing
    let mut plan = init4.clone();
    let mut rng = stream_rng(3, 0);
    let n = 20_000u64;
    let (mut t_label, mut t_comp, mut t_select, mut t_rest) = (0.0, 0.0, 0.0, 0.0);
    let mut comp_count = 0u64;
    let mut chosen_count = 0u64;
    for _ in 0..n {
        let t0 = Instant::now();
        let labelling = label_flip_edges(&big, &plan, params4.lambda, &mut rng);
        let t1 = Instant::now();
        let comps = boundary_components(&big, &plan, &labelling);
        let t2 = Instant::now();
        let choices = select_flip_set(&big, &comps, &mut rng);
        let t3 = Instant::now();
        comp_count += comps.len() as u64;
        chosen_count += choices.len() as u64;
        let undo = apply_flip_set(&big, &mut plan, &comps, &choices);
        undo_flips(&big, &mut plan, &undo);
        let t4 = Instant::now();
        t_label += (t1 - t0).as_secs_f64();
        t_comp += (t2 - t1).as_secs_f64();
        t_select += (t3 - t2).as_secs_f64();
        t_rest += (t4 - t3).as_secs_f64();
    }
    println!(
        "label {:.1}us  components {:.1}us  select {:.1}us  apply+undo {:.1}us  (avg comps {:.1}, chosen {:.2})",
        1e6 * t_label / n as f64,
        1e6 * t_comp / n as f64,
        1e6 * t_select / n as f64,
        1e6 * t_rest / n as f64,
        comp_count as f64 / n as f64,
        chosen_count as f64 / n as f64,
    );

    // full step rate for reference
    let mut plan = init4.clone();
    let mut rng = stream_rng(3, 0);
    let t0 = Instant::now();
    for step in 0..n {
        mander::propose_and_filter(&big, &mut plan, &params4, &point, step, &mut rng);
    }
    println!("flip: {:.0} proposals/sec", n as f64 / t0.elapsed().as_secs_f64());
}
