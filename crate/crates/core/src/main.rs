fn main() {
    std::process::exit(chcomply::cli::run());
}
