fn main() -> std::process::ExitCode {
    lattice_walk::cli::run(std::env::args_os())
}
