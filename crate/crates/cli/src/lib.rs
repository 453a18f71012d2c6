//! Command-line front end and HTTP decision service.

pub mod cli;
pub mod commands;
pub mod error;
pub mod provider;
pub mod server;
pub mod store;

use clap::Parser;

pub use error::CliError;

/// Parses `args`, runs the command and returns the process exit status.
/// Errors are written to stderr as a JSON envelope.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::Usage(e.to_string().trim_end().to_string());
            eprintln!("{}", err.envelope());
            return err.exit_code();
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log_level).try_init();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("worker pool already configured: {e}");
        }
    }
    let result = commands::load_settings(cli.config.as_ref())
        .and_then(|settings| commands::run(cli.command, &commands::Env { settings }));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.envelope());
            e.exit_code()
        }
    }
}
