use std::process::ExitCode;

fn main() -> ExitCode {
    emotion_tokens::cli::main()
}
