use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let result = csd_rla::cli::execute(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    ExitCode::from(result.exit_code as u8)
}
