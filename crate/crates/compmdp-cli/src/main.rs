//! Command-line interface: validate and solve MDP documents, evaluate
//! composition expressions, run structural checks, and build the demo
//! worlds end to end. Exit code 0 means PASS, 1 means FAIL or a named
//! violation, 2 a usage error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use compmdp::io::{
    self, evaluate, group_on, parse_expr, resolve_bindings, EvalDetail, ExprFile,
    SolutionDocument,
};
use compmdp::label::StateId;
use compmdp::puncture::check_static_obstacles;
use compmdp::randgen;
use compmdp::solver::{bellman_backup, value_iteration, SolveOptions};
use compmdp::symmetry::{quotient, quotient_mediator, GroupAction};
use compmdp::worlds;
use compmdp::zigzag::verify_componentwise;
use compmdp::FiniteMdp;

#[derive(Parser)]
#[command(
    name = "compmdp",
    about = "Compositional finite-MDP engine: build, compose, solve and check."
)]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct GlobalOpts {
    /// Discount factor for solving.
    #[arg(long, global = true, default_value_t = 0.9)]
    gamma: f64,
    /// Numeric tolerance; defaults to 1e-9 (1e-6 for demo gap checks).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Size guard for search and product constructions.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    budget: usize,
    /// Run value-iteration sweeps on a thread pool.
    #[arg(long, global = true, default_value_t = false)]
    parallel: bool,
}

impl GlobalOpts {
    fn tol(&self) -> f64 {
        self.tol.unwrap_or(1e-9)
    }

    /// The demos certify the stitched-policy gap at 1e-6 unless the flag
    /// overrides it.
    fn gap_tol(&self) -> f64 {
        self.tol.unwrap_or(1e-6)
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            gamma: self.gamma,
            tol: self.tol(),
            parallel: self.parallel,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse an MDP document and report every structural violation.
    Validate { file: PathBuf },
    /// Evaluate a composition expression file and write the result.
    Compose {
        exprfile: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Solve an MDP document by value iteration.
    Solve {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a structural or optimality check; exits 0 on PASS, 1 on FAIL.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Build a demo world and run its full verification pipeline.
    #[command(subcommand)]
    Demo(DemoCommand),
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Componentwise-learning check on a zigzag expression.
    Theorem3 { exprfile: PathBuf },
    /// Projection-marginal check on a fiber-product expression.
    Pushforward { exprfile: PathBuf },
    /// Two disjoint obstacle sets factor the MDP as both a fiber product
    /// and a pushout.
    #[command(name = "static-obstacles")]
    StaticObstacles {
        file: PathBuf,
        /// First obstacle group: comma-separated state identifiers.
        #[arg(long, value_delimiter = ',')]
        o1: Vec<String>,
        /// Second obstacle group: comma-separated state identifiers.
        #[arg(long, value_delimiter = ',')]
        o2: Vec<String>,
    },
    /// Quotient construction, universal factorization against random
    /// renamed targets, and lifted-policy optimality.
    Quotient {
        file: PathBuf,
        #[arg(long)]
        group: PathBuf,
        /// Number of random factorization targets.
        #[arg(long, default_value_t = 20)]
        targets: usize,
    },
}

#[derive(Subcommand)]
enum DemoCommand {
    /// 4×4 grid with obstacles: validation, puncturing, obstacle
    /// factorization, and a solve.
    Gridworld,
    /// Three regions visited in sequence on the 4×4 grid.
    Regions,
    /// Fetch an object in a 2×2 box and place it on a shelf in the 2×3
    /// outside zone.
    Fetch,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn load_expr(path: &Path) -> Result<(ExprFile, io::Environment), String> {
    let text = read(path)?;
    let file = ExprFile::from_str(&text).map_err(|e| e.to_string())?;
    let base = path.parent().unwrap_or(Path::new("."));
    let env = resolve_bindings(&file.bind, base).map_err(|e| e.to_string())?;
    Ok((file, env))
}

fn run(cli: &Cli) -> Result<bool, String> {
    match &cli.command {
        Command::Validate { file } => {
            let text = read(file)?;
            let mdp = io::parse_mdp_lenient(&text).map_err(|e| e.to_string())?;
            let report = mdp.validate();
            if report.is_empty() {
                println!(
                    "ok: {} states, {} actions",
                    mdp.state_count(),
                    mdp.action_count()
                );
                Ok(true)
            } else {
                print!("{report}");
                Ok(false)
            }
        }
        Command::Compose { exprfile, output } => {
            let (file, env) = load_expr(exprfile)?;
            let expr = parse_expr(&file.expr).map_err(|e| e.to_string())?;
            let outcome = evaluate(&expr, &env).map_err(|e| e.to_string())?;
            std::fs::write(output, io::serialize_mdp(&outcome.mdp))
                .map_err(|e| format!("cannot write {}: {e}", output.display()))?;
            println!(
                "wrote {} ({} states, {} actions)",
                output.display(),
                outcome.mdp.state_count(),
                outcome.mdp.action_count()
            );
            Ok(true)
        }
        Command::Solve { file, output } => {
            let text = read(file)?;
            let mdp = io::parse_mdp(&text).map_err(|e| e.to_string())?;
            let sol = value_iteration(&mdp, cli.opts.solve_options()).map_err(|e| e.to_string())?;
            let doc = SolutionDocument::from_solution(&sol);
            let rendered = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())?;
            match output {
                Some(path) => std::fs::write(path, rendered)
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
                None => println!("{rendered}"),
            }
            Ok(sol.converged)
        }
        Command::Check(check) => run_check(check, &cli.opts),
        Command::Demo(demo) => run_demo(demo, &cli.opts),
    }
}

fn run_check(check: &CheckCommand, opts: &GlobalOpts) -> Result<bool, String> {
    match check {
        CheckCommand::Theorem3 { exprfile } => {
            let (file, env) = load_expr(exprfile)?;
            let expr = parse_expr(&file.expr).map_err(|e| e.to_string())?;
            let outcome = evaluate(&expr, &env).map_err(|e| e.to_string())?;
            let Some(EvalDetail::ZigZag(diagram)) = outcome.detail else {
                return Err("expression does not describe a zigzag diagram".into());
            };
            let report = verify_componentwise(&diagram, opts.gamma, opts.gap_tol())
                .map_err(|e| e.to_string())?;
            println!("{report}");
            Ok(report.pass)
        }
        CheckCommand::Pushforward { exprfile } => {
            let (file, env) = load_expr(exprfile)?;
            let expr = parse_expr(&file.expr).map_err(|e| e.to_string())?;
            let outcome = evaluate(&expr, &env).map_err(|e| e.to_string())?;
            let Some(EvalDetail::Fiber(result, _)) = outcome.detail else {
                return Err("expression does not describe a fiber product".into());
            };
            let ok = compmdp::composition::check_marginals_with_eps(&result, opts.tol());
            println!(
                "projection marginals recover the factors: {}",
                if ok { "PASS" } else { "FAIL" }
            );
            Ok(ok)
        }
        CheckCommand::StaticObstacles { file, o1, o2 } => {
            let text = read(file)?;
            let mdp = io::parse_mdp(&text).map_err(|e| e.to_string())?;
            let parse_set = |ids: &[String]| -> Result<BTreeSet<StateId>, String> {
                ids.iter()
                    .map(|id| id.parse::<StateId>().map_err(|e| e.to_string()))
                    .collect()
            };
            let o1 = parse_set(o1)?;
            let o2 = parse_set(o2)?;
            if !o1.is_disjoint(&o2) {
                return Err("obstacle groups must be disjoint".into());
            }
            let ok = check_static_obstacles(&mdp, &o1, &o2).map_err(|e| e.to_string())?;
            println!(
                "fiber-product and pushout factorizations: {}",
                if ok { "PASS" } else { "FAIL" }
            );
            Ok(ok)
        }
        CheckCommand::Quotient {
            file,
            group,
            targets,
        } => {
            let text = read(file)?;
            let mdp = io::parse_mdp(&text).map_err(|e| e.to_string())?;
            let group_text = read(group)?;
            let doc: io::GroupDocument =
                serde_json::from_str(&group_text).map_err(|e| format!("bad group document: {e}"))?;
            let action = group_on(&doc, &mdp).map_err(|e| e.to_string())?;
            check_quotient(&mdp, &action, *targets, opts)
        }
    }
}

fn check_quotient(
    mdp: &FiniteMdp,
    action: &GroupAction,
    targets: usize,
    opts: &GlobalOpts,
) -> Result<bool, String> {
    let mut pass = true;
    println!("group order: {}", action.order());
    let (quot, q) = quotient(action).map_err(|e| e.to_string())?;
    let orbit_count = action.state_orbits().len();
    let states_ok = quot.state_count() == orbit_count;
    println!(
        "quotient states = state orbits ({} = {orbit_count}): {}",
        quot.state_count(),
        verdict(states_ok)
    );
    pass &= states_ok;
    let q_ok = q.check().is_empty();
    println!("quotient morphism validates: {}", verdict(q_ok));
    pass &= q_ok;

    let mut rng = randgen::seeded(opts.seed);
    let mut factored_ok = true;
    for _ in 0..targets {
        let renaming = randgen::random_renaming(&mut rng, &quot, "t");
        let invariant = q.then(&renaming).map_err(|e| e.to_string())?;
        let mediator = match quotient_mediator(action, &q, &invariant) {
            Ok(m) => m,
            Err(e) => {
                println!("factorization failed: {e}");
                factored_ok = false;
                break;
            }
        };
        let recomposed = q.then(&mediator).map_err(|e| e.to_string())?;
        if recomposed.state_map() != invariant.state_map()
            || recomposed.action_map() != invariant.action_map()
            || !mediator.check().is_empty()
        {
            factored_ok = false;
            break;
        }
    }
    println!(
        "{targets} random invariant morphisms factor through the quotient: {}",
        verdict(factored_ok)
    );
    pass &= factored_ok;

    if mdp.has_reward() {
        let solve = SolveOptions {
            gamma: opts.gamma,
            tol: opts.tol() * 1e-3,
            parallel: opts.parallel,
            ..Default::default()
        };
        let quot_sol = value_iteration(&quot, solve).map_err(|e| e.to_string())?;
        let full_sol = value_iteration(mdp, solve).map_err(|e| e.to_string())?;
        let mut lift_ok = true;
        for s in mdp.states() {
            if mdp.is_terminal(s) {
                continue;
            }
            let orbit_action = match quot_sol.policy.get(q.apply_state(s).unwrap()) {
                Some(a) => a,
                None => continue,
            };
            // A representative of the chosen orbit anchored at s.
            let lifted = mdp
                .actions_at(s)
                .iter()
                .find(|a| q.apply_action(a) == Some(orbit_action));
            let Some(lifted) = lifted else {
                lift_ok = false;
                break;
            };
            let (best, _) = bellman_backup(mdp, &full_sol.values, s, opts.gamma, opts.tol());
            let r = mdp.reward(lifted).unwrap_or(0.0);
            let future: f64 = mdp
                .transition(lifted)
                .map(|d| d.iter().map(|(t, p)| p * full_sol.value(t)).sum())
                .unwrap_or(0.0);
            let lifted_q = r + opts.gamma * future;
            if (best - lifted_q).abs() > 1e-6 {
                println!("lifted action at {s} backs up {lifted_q}, optimal {best}");
                lift_ok = false;
                break;
            }
        }
        println!(
            "lifted quotient policy is optimal within 1e-6: {}",
            verdict(lift_ok)
        );
        pass &= lift_ok;
    }

    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

const DEMO_OBSTACLES: [(u32, u32); 3] = [(1, 1), (1, 2), (3, 2)];
const DEMO_GOAL: (u32, u32) = (3, 0);

fn run_demo(demo: &DemoCommand, opts: &GlobalOpts) -> Result<bool, String> {
    match demo {
        DemoCommand::Gridworld => {
            let grid = worlds::grid_world(4, 4, &DEMO_OBSTACLES, DEMO_GOAL, 0.0)
                .map_err(|e| e.to_string())?;
            let report = grid.validate();
            println!("grid validates: {}", verdict(report.is_empty()));
            if !report.is_empty() {
                print!("{report}");
                return Ok(false);
            }
            let obstacle_states: BTreeSet<StateId> = DEMO_OBSTACLES
                .iter()
                .map(|&(x, y)| worlds::grid_cell(x, y))
                .collect();
            let (punctured, incl) = compmdp::puncture::puncture(&grid, &obstacle_states);
            println!(
                "punctured world: {} states, {} actions, subprocess: {}",
                punctured.state_count(),
                punctured.action_count(),
                verdict(incl.is_subprocess())
            );
            let o1: BTreeSet<StateId> = [worlds::grid_cell(1, 1), worlds::grid_cell(1, 2)].into();
            let o2: BTreeSet<StateId> = [worlds::grid_cell(3, 2)].into();
            let factored = check_static_obstacles(&grid, &o1, &o2).map_err(|e| e.to_string())?;
            println!("obstacle split factors the world: {}", verdict(factored));
            let absorbing = worlds::make_absorbing(
                &punctured,
                &[worlds::grid_cell(DEMO_GOAL.0, DEMO_GOAL.1)].into(),
            );
            let sol =
                value_iteration(&absorbing, opts.solve_options()).map_err(|e| e.to_string())?;
            println!(
                "solved in {} sweeps; value at x0y3 = {:.6}",
                sol.iterations,
                sol.value(&worlds::grid_cell(0, 3))
            );
            let pass = factored && sol.converged;
            println!("{}", if pass { "PASS" } else { "FAIL" });
            Ok(pass)
        }
        DemoCommand::Regions => {
            let z =
                worlds::sequential_regions(4, 4, &DEMO_OBSTACLES, &[(3, 0), (0, 0), (3, 3)], 0.0)
                    .map_err(|e| e.to_string())?;
            let report = verify_componentwise(&z, opts.gamma, opts.gap_tol())
                .map_err(|e| e.to_string())?;
            println!("{report}");
            Ok(report.pass)
        }
        DemoCommand::Fetch => {
            let z = worlds::fetch_and_place(2, 2, 2, 3, &[((1, 1), (0, 0))], (1, 2))
                .map_err(|e| e.to_string())?;
            let report = verify_componentwise(&z, opts.gamma, opts.gap_tol())
                .map_err(|e| e.to_string())?;
            println!("{report}");
            Ok(report.pass)
        }
    }
}
