fn main() {
    eprintln!("cosp: pipeline commands are not wired up yet");
    std::process::exit(2);
}
