fn main() -> std::process::ExitCode {
    medaide::cli::main()
}
