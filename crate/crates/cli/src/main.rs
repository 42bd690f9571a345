//! `imkt`: command-line front end for the influence-market library.
//!
//! Every command parses its input documents, calls one library operation and
//! emits the result. Exit codes: 0 pass, 1 fail, 2 malformed input.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use influence_market::equilibrium::{
    phi_constants, phi_iterate, verify_candidate, EquilibriumCandidate, PhiPoint,
};
use influence_market::hsolver::{
    solve_bruteforce, solve_hierarchical, validate_hierarchical, ContributionMode, GridSpec,
    SolveOutcome, SolverOptions, DEFAULT_STATE_LIMIT,
};
use influence_market::io::{
    emit_instance, emit_report, exit_code, parse_instance, InstanceDocument, MarketInstance,
    Report, ReportFormat, RoleAnnotation, EXIT_MALFORMED,
};
use influence_market::market::{
    build_influence_graph, check_existence_conditions, validate_market, LinearInfluenceUtility,
    Market, SupplyMode, Utility,
};
use influence_market::rational::{format_rational, parse_rational, powi, qi};
use influence_market::reduction::{
    build_linear_market, crossing_gadget, extract_strategies, gen_sparse_game, nash_oracle,
    threshold_lift, verify_wsne, GadgetIds, ReductionParams, GADGET_GOODS,
};
use influence_market::Q;

fn rational(s: &str) -> Result<Q, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

#[derive(Parser)]
#[command(name = "imkt", version, about = "Exchange markets with social influence")]
struct Cli {
    /// Write the main output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format for check commands.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    /// Line-delimited JSON records.
    Lines,
}

#[derive(Subcommand)]
enum Command {
    /// Check market invariants and existence conditions (and a labeling, if given).
    Validate {
        market: PathBuf,
        /// Require every good's supply to be exactly 1.
        #[arg(long)]
        unit_supply: bool,
        #[arg(long)]
        labeling: Option<PathBuf>,
    },
    /// Check an approximate-equilibrium candidate.
    Verify {
        market: PathBuf,
        candidate: PathBuf,
        #[arg(long, value_parser = rational)]
        eps: Q,
    },
    /// Exhaustive grid search.
    SolveBrute {
        market: PathBuf,
        #[arg(long)]
        grid: u64,
        #[arg(long, value_parser = rational)]
        eps: Q,
        #[arg(long, default_value_t = DEFAULT_STATE_LIMIT)]
        state_limit: u128,
    },
    /// Divide-and-conquer search over a hierarchical labeling.
    SolveTree {
        market: PathBuf,
        #[arg(long)]
        labeling: PathBuf,
        #[arg(long)]
        grid: u64,
        #[arg(long, value_parser = rational)]
        eps: Q,
        /// Worker threads over the price grid.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        no_memo: bool,
        /// Round leaf-group contributions to the grid.
        #[arg(long)]
        rounded: bool,
    },
    /// Compile a sparse game into a linear-influence market.
    Reduce {
        game: PathBuf,
        #[arg(long, value_parser = rational)]
        alpha: Option<Q>,
        #[arg(long, value_parser = rational)]
        beta: Option<Q>,
        #[arg(long, value_parser = rational)]
        gamma: Option<Q>,
        #[arg(long, value_parser = rational)]
        scale: Option<Q>,
        #[arg(long, value_parser = rational)]
        tau: Option<Q>,
        #[arg(long)]
        planar_defaults: bool,
    },
    /// Read mixed strategies off a candidate for a reduced market.
    Extract {
        market: PathBuf,
        candidate: PathBuf,
        /// Rounding threshold; defaults to 1/n^12.
        #[arg(long, value_parser = rational)]
        tau: Option<Q>,
    },
    /// Lift a separable piecewise-linear market to threshold utilities.
    Lift {
        spec: PathBuf,
        #[arg(long)]
        n: usize,
    },
    /// Emit the five-trader crossing fragment.
    Gadget {
        #[arg(long, value_parser = rational, default_value = "1/16")]
        alpha: Q,
        #[arg(long, value_parser = rational, default_value = "1/8")]
        scale: Q,
    },
    /// Seeded sparse normalized game.
    GenGame {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Exact equilibrium of a small game.
    NashOracle { game: PathBuf },
    /// Well-supported equilibrium check of a strategy pair.
    VerifyWsne {
        game: PathBuf,
        strategies: PathBuf,
        #[arg(long, value_parser = rational)]
        eps: Q,
    },
    /// Damped iteration of the fixed-point map from the uniform point.
    PhiIterate {
        market: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_parser = rational, default_value = "1/2")]
        damping: Q,
    },
}

fn read_text(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn read_doc(path: &Path) -> Result<InstanceDocument> {
    parse_instance(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// What a command produced: text for the main output and a pass/fail flag.
struct Outcome {
    text: String,
    passed: bool,
}

impl Outcome {
    fn doc(doc: &InstanceDocument) -> Self {
        Self {
            text: emit_instance(doc),
            passed: true,
        }
    }

    fn report(report: &Report, format: Format) -> Self {
        let format = match format {
            Format::Text => ReportFormat::Text,
            Format::Lines => ReportFormat::Lines,
        };
        Self {
            text: emit_report(report, format),
            passed: report.passed(),
        }
    }
}

fn solve_outcome(out: SolveOutcome) -> Outcome {
    eprintln!("{}", out.stats);
    if let Some(d) = &out.diagnostic {
        eprintln!("{d}");
    }
    match out.candidate {
        Some(c) => Outcome::doc(&InstanceDocument::Candidate(c)),
        None => Outcome {
            text: String::new(),
            passed: false,
        },
    }
}

fn market_only(path: &Path) -> Result<MarketInstance> {
    Ok(read_doc(path)?.into_market()?)
}

fn run(cli: &Cli) -> Result<Outcome> {
    Ok(match &cli.command {
        Command::Validate {
            market,
            unit_supply,
            labeling,
        } => {
            let m = market_only(market)?.market;
            let mode = if *unit_supply {
                SupplyMode::Unit
            } else {
                SupplyMode::Band
            };
            let mut diagnostics: Vec<String> = validate_market(&m, mode)
                .iter()
                .map(|d| d.to_string())
                .collect();
            if let Some(path) = labeling {
                let l = read_doc(path)?.into_labeling()?;
                let check = validate_hierarchical(&build_influence_graph(&m), &l)?;
                diagnostics.extend(check.violation.map(|v| format!("not hierarchical: {v}")));
            }
            let existence = check_existence_conditions(&m).holds();
            Outcome::report(
                &Report::Diagnostics {
                    diagnostics,
                    existence,
                },
                cli.format,
            )
        }
        Command::Verify {
            market,
            candidate,
            eps,
        } => {
            let m = market_only(market)?.market;
            let c = read_doc(candidate)?.into_candidate()?;
            let report = verify_candidate(&m, &c, eps)?;
            Outcome::report(&Report::Verification(report), cli.format)
        }
        Command::SolveBrute {
            market,
            grid,
            eps,
            state_limit,
        } => {
            let m = market_only(market)?.market;
            let out = solve_bruteforce(&m, &GridSpec::new(*grid)?, eps, *state_limit)?;
            solve_outcome(out)
        }
        Command::SolveTree {
            market,
            labeling,
            grid,
            eps,
            jobs,
            no_memo,
            rounded,
        } => {
            let m = market_only(market)?.market;
            let l = read_doc(labeling)?.into_labeling()?;
            let options = SolverOptions {
                memoize: !no_memo,
                contributions: if *rounded {
                    ContributionMode::Rounded
                } else {
                    ContributionMode::Exact
                },
                jobs: (*jobs).max(1),
            };
            solve_outcome(solve_hierarchical(&m, &l, &GridSpec::new(*grid)?, eps, &options)?)
        }
        Command::Reduce {
            game,
            alpha,
            beta,
            gamma,
            scale,
            tau,
            planar_defaults,
        } => {
            let g = read_doc(game)?.into_game()?;
            let mut p = if *planar_defaults {
                ReductionParams::planar_defaults(g.n)
            } else {
                ReductionParams::defaults(g.n)
            };
            for (slot, value) in [
                (&mut p.alpha, alpha),
                (&mut p.beta, beta),
                (&mut p.gamma, gamma),
                (&mut p.scale, scale),
                (&mut p.tau, tau),
            ] {
                if let Some(v) = value {
                    *slot = v.clone();
                }
            }
            let (market, roles) = build_linear_market(&g, &p)?;
            Outcome::doc(&InstanceDocument::Market(MarketInstance {
                market,
                roles: Some(RoleAnnotation::Game(roles)),
            }))
        }
        Command::Extract {
            market,
            candidate,
            tau,
        } => {
            let Some(RoleAnnotation::Game(roles)) = market_only(market)?.roles else {
                bail!("market document carries no game role map");
            };
            let c: EquilibriumCandidate = read_doc(candidate)?.into_candidate()?;
            let tau = tau
                .clone()
                .unwrap_or_else(|| qi(1) / powi(&qi(roles.n as i64), 12));
            let pair = extract_strategies(&roles, &c, &tau)?;
            Outcome::doc(&InstanceDocument::Strategies(pair))
        }
        Command::Lift { spec, n } => {
            let s = read_doc(spec)?.into_plm_spec()?;
            let (market, roles) = threshold_lift(&s, *n)?;
            Outcome::doc(&InstanceDocument::Market(MarketInstance {
                market,
                roles: Some(RoleAnnotation::Lift { roles }),
            }))
        }
        Command::Gadget { alpha, scale } => {
            let params = ReductionParams {
                alpha: alpha.clone(),
                scale: scale.clone(),
                ..ReductionParams::defaults(1)
            };
            let pass = |first: usize| {
                let mut c = vec![qi(0); GADGET_GOODS];
                c[first] = qi(1);
                c[first + 1] = qi(1);
                Utility::Linear(LinearInfluenceUtility::plain(c))
            };
            let ids = GadgetIds::default();
            let traders = crossing_gadget(&ids, pass(0), pass(2), &params)?;
            Outcome::doc(&InstanceDocument::Market(MarketInstance {
                market: Market::new(GADGET_GOODS, traders)?,
                roles: Some(RoleAnnotation::Gadget(ids)),
            }))
        }
        Command::GenGame { n, seed } => {
            Outcome::doc(&InstanceDocument::Game(gen_sparse_game(*n, *seed)?))
        }
        Command::NashOracle { game } => {
            let g = read_doc(game)?.into_game()?;
            Outcome::doc(&InstanceDocument::Strategies(nash_oracle(&g)?))
        }
        Command::VerifyWsne {
            game,
            strategies,
            eps,
        } => {
            let g = read_doc(game)?.into_game()?;
            let pair = read_doc(strategies)?.into_strategies()?;
            Outcome::report(&Report::Wsne(verify_wsne(&g, &pair, eps)?), cli.format)
        }
        Command::PhiIterate {
            market,
            steps,
            damping,
        } => {
            let m = market_only(market)?.market;
            let consts = phi_constants(&m)?;
            let trace = phi_iterate(&m, &PhiPoint::uniform(&m), &consts, *steps, damping)?;
            eprintln!(
                "best step {} residual {}",
                trace.best_index,
                format_rational(trace.best_residual())
            );
            Outcome::doc(&InstanceDocument::Candidate(trace.best_point().to_candidate(&m)))
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let written = match &cli.out {
                Some(path) => fs::write(path, &outcome.text),
                None => io::stdout().write_all(outcome.text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_MALFORMED as u8);
            }
            ExitCode::from(exit_code(outcome.passed) as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_MALFORMED as u8)
        }
    }
}
