//! Prints the default run configuration as TOML.
//!
//!     cargo run --example write_default_config > run.toml

fn main() -> ctv::error::Result<()> {
    print!("{}", ctv::config::RunConfig::default().to_toml()?);
    Ok(())
}
