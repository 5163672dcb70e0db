fn main() -> std::process::ExitCode {
    mermix::cli::run(std::env::args_os())
}
