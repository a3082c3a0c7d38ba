use std::process::ExitCode;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout().lock();
    ExitCode::from(fedcrypt_cli::main_with_args(std::env::args_os(), &mut stdout))
}
