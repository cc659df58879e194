fn main() {
    std::process::exit(cjme::cli::run());
}
