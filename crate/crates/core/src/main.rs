fn main() {
    println!("steerfuse CLI placeholder");
}
