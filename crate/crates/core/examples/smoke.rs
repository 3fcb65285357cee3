use skillnet::dsl::print_skill;
use skillnet::harness::{run_curriculum, LogLine, RunConfig};

fn main() {
    let config = RunConfig { seed: 0, ..Default::default() };
    let out = run_curriculum(&config).unwrap();
    for line in &out.log {
        match line {
            LogLine::Refactor { event } => println!("\nREFACTOR {:?} {:?}\n  {:?}", event.case, event.involved, event.outcome),
            LogLine::Episode { record } if !record.delta => {
                println!(
                    "ep{:3} {:20} root={} fail={}",
                    record.index, record.task,
                    record.root.as_deref().unwrap_or("-"),
                    record.failure.first().map(|f| &f[..f.len().min(150)]).unwrap_or("")
                );
            }
            _ => {}
        }
    }
    for id in ["do_mine_cobblestone", "do_craft_stone_pickaxe", "craftWoodenPickaxe"] {
        if let Some(n) = out.network.node(id) {
            println!("\n=== {id}\n{}", print_skill(&n.program));
        }
    }
}
