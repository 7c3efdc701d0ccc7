use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use panelbreak::{PenaltyKind, VcovKind};
use panelbreak_cli::{
    cmd_detect, cmd_estimate, cmd_simulate, cmd_test, ColumnRoles, InputSpec, SelectionSpec,
    SimExperiment, SimulateSpec,
};

#[derive(Parser)]
#[command(
    name = "panelbreak",
    version,
    about = "Break detection, regime estimation and tests for balanced panels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the number and location of breaks from a CSV panel.
    Detect {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Detect breaks, then fit per-regime slopes with standard errors.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        /// Covariance estimator behind the reported standard errors.
        #[arg(long, default_value = "cluster", value_parser = VcovKind::from_str)]
        vcov: VcovKind,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Detect breaks, then test whether adjacent regimes differ.
    Test {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        /// Covariance estimator behind the slope tests.
        #[arg(long, default_value = "cluster", value_parser = VcovKind::from_str)]
        vcov: VcovKind,
        /// Family-wise level; each test runs at alpha / (number of tests).
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a Monte Carlo experiment on a synthetic panel.
    Simulate {
        /// Which experiment to run.
        #[arg(long, value_enum, default_value_t = ExperimentArg::Selection)]
        experiment: ExperimentArg,
        /// Individuals in the synthetic panel.
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// Time periods in the synthetic panel.
        #[arg(long, default_value_t = 20)]
        t: usize,
        /// Break periods, comma separated. Omit the flag for one break at
        /// t/3; pass `--breaks` with no value for a no-break panel.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        breaks: Option<Vec<usize>>,
        /// Monte Carlo replications.
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Base RNG seed; replication r uses stream r of this seed.
        #[arg(long, default_value_t = 20260401)]
        seed: u64,
        #[arg(long, default_value = "hqic", value_parser = PenaltyKind::from_str)]
        penalty: PenaltyKind,
        /// Largest break count searched during selection.
        #[arg(long)]
        m_max: Option<usize>,
        /// Covariance estimator used by the slopes experiment.
        #[arg(long, default_value = "cluster", value_parser = VcovKind::from_str)]
        vcov: VcovKind,
        /// Also write replication 0's panel as panel.csv.
        #[arg(long)]
        dump_panel: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Long-format CSV: one row per (id, time) observation.
    #[arg(long)]
    input: PathBuf,
    /// Column holding the individual identifier.
    #[arg(long, default_value = "id")]
    id_col: String,
    /// Column holding the time label.
    #[arg(long, default_value = "time")]
    time_col: String,
    /// Column holding the outcome.
    #[arg(long, default_value = "y")]
    y_col: String,
    /// Regressor columns, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    x_cols: Vec<String>,
    /// Prepend an all-ones column named `const`.
    #[arg(long)]
    intercept: bool,
}

impl InputArgs {
    fn spec(self) -> InputSpec {
        InputSpec {
            path: self.input,
            roles: ColumnRoles {
                id: self.id_col,
                time: self.time_col,
                y: self.y_col,
                x: self.x_cols,
            },
            intercept: self.intercept,
        }
    }
}

#[derive(Args)]
struct SelectionArgs {
    /// Information criterion scoring the break count.
    #[arg(long, default_value = "hqic", value_parser = PenaltyKind::from_str)]
    penalty: PenaltyKind,
    /// Largest break count searched; defaults to every feasible count.
    #[arg(long)]
    m_max: Option<usize>,
    /// Skip selection and fix the break count.
    #[arg(long, conflicts_with_all = ["penalty", "m_max"])]
    m: Option<usize>,
}

impl SelectionArgs {
    fn spec(self) -> SelectionSpec {
        SelectionSpec {
            penalty: self.penalty,
            m_max: self.m_max,
            fixed_m: self.m,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Directory receiving the report CSVs and run.log.
    #[arg(long, default_value = "panelbreak-out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentArg {
    /// Break-location histograms at a fixed break count.
    Locations,
    /// Bias and dispersion of the slope estimators at the true partition.
    Slopes,
    /// Distribution of the selected break count.
    Selection,
    /// Selection accuracy as time-constant noise grows.
    MixingSweep,
    /// Detection of one break as its size grows.
    BreakSizeSweep,
}

impl From<ExperimentArg> for SimExperiment {
    fn from(arg: ExperimentArg) -> Self {
        match arg {
            ExperimentArg::Locations => SimExperiment::Locations,
            ExperimentArg::Slopes => SimExperiment::Slopes,
            ExperimentArg::Selection => SimExperiment::Selection,
            ExperimentArg::MixingSweep => SimExperiment::MixingSweep,
            ExperimentArg::BreakSizeSweep => SimExperiment::BreakSizeSweep,
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Detect {
            input,
            selection,
            output,
        } => cmd_detect(&input.spec(), &selection.spec(), &output.out_dir),
        Command::Estimate {
            input,
            selection,
            vcov,
            output,
        } => cmd_estimate(&input.spec(), &selection.spec(), vcov, &output.out_dir),
        Command::Test {
            input,
            selection,
            vcov,
            alpha,
            output,
        } => cmd_test(
            &input.spec(),
            &selection.spec(),
            vcov,
            alpha,
            &output.out_dir,
        ),
        Command::Simulate {
            experiment,
            n,
            t,
            breaks,
            reps,
            seed,
            penalty,
            m_max,
            vcov,
            dump_panel,
            output,
        } => cmd_simulate(
            &SimulateSpec {
                experiment: experiment.into(),
                n,
                t,
                breaks,
                replications: reps,
                seed,
                penalty,
                m_max,
                vcov,
                dump_panel,
            },
            &output.out_dir,
        ),
    }
}
