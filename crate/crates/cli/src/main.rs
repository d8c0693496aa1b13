fn main() {
    std::process::exit(roadq_cli::run(std::env::args_os()));
}
