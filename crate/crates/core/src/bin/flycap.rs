use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let seed = std::env::var(flycap::cli::SEED_ENV).ok();
    let code = flycap::cli::execute(
        std::env::args_os(),
        seed.as_deref(),
        &mut io::stdout(),
        &mut io::stderr(),
    );
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
