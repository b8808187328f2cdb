use std::io::{self, Write};

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = io::stdout().lock();
    let mut err = io::stderr().lock();
    let code = agentos_cli::dispatch(&argv, &mut input, &mut out, &mut err);
    let _ = out.flush();
    std::process::exit(code);
}
