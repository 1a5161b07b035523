fn main() -> std::process::ExitCode {
    ragcrit::cli::main()
}
