fn main() {
    std::process::exit(bellman_fd::commands::run(std::env::args_os()));
}
