use clap::Parser;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    mirrorfield::retain_heap_memory();
    mirrorfield::cli::run(mirrorfield::cli::Cli::parse())
}
