use std::process::ExitCode;

fn main() -> ExitCode {
    let (code, text) = confrefine_cli::main_with_args(std::env::args_os());
    if code == 0 {
        print!("{text}");
    } else {
        eprintln!("{}", text.trim_end());
    }
    ExitCode::from(code as u8)
}
