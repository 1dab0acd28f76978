fn main() {
    std::process::exit(feedback_miner::cli::run(std::env::args_os()));
}
