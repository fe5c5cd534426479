fn main() {
    std::process::exit(edm_pose::cli::main_with_args(std::env::args_os()));
}
