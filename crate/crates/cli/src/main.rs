use clap::Parser;

fn main() -> anyhow::Result<()> {
    riskplan_cli::run(riskplan_cli::Cli::parse())
}
