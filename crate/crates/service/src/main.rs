fn main() -> std::process::ExitCode {
    dq_service::cli::main()
}
