fn main() -> std::process::ExitCode {
    ufrb::cli::main_entry()
}
