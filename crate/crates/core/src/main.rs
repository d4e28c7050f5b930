fn main() -> std::process::ExitCode {
    wfvi::cli::main()
}
