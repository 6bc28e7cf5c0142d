use std::io::{self, Write};
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let result = snipq::cli::run(std::env::args_os(), &mut input, &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.code == 0 => {
            // --help and --version
            print!("{e}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("snipq: {}", e.message.trim_end());
            ExitCode::from(e.code.clamp(1, 255) as u8)
        }
    }
}
