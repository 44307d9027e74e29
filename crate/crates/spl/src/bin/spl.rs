fn main() {
    std::process::exit(spl::cli::run());
}
