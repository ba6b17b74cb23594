fn main() {
    println!("rankzeta");
}
