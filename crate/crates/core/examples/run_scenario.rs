//! Runs a scenario given inline as TOML: the open-loop plant under a
//! piecewise-constant force, certified against its own storage.

use switched_ni::scenario::{RunMode, Scenario};

const SCENARIO: &str = r#"
name = "plant-steps"
system = "plant"
initial_state = [0.0, 0.0]

[input]
kind = "piecewise"
table = [[0.0, 1.0], [2.0, -1.0], [4.0, 0.0]]

[sim]
t_end = 8.0
step = 1e-3

[[checks]]
kind = "dissipation"
tol = 1e-8

[[checks]]
kind = "positive-definite"
tol = 1e-12
region = { lower = [-1.0, -1.0], upper = [1.0, 1.0], counts = [21, 21] }

[output]
dir = "plant-steps-out"
plot_enabled = false
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario: Scenario = SCENARIO.parse()?;
    let outcome = scenario.run(RunMode::Certify)?;
    for rep in &outcome.reports {
        println!("{}: {}", rep.check_name, rep.verdict.as_str());
    }
    for path in &outcome.written {
        println!("wrote {}", path.display());
    }
    println!("exit code {}", outcome.exit_code);
    Ok(())
}
