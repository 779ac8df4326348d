fn main() {
    std::process::exit(cvmbqc::cli::run());
}
