fn main() -> std::process::ExitCode {
    hifm::cli::run(std::env::args_os())
}
