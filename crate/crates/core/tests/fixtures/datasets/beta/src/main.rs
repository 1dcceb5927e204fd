//! Render a template file to stdout or a file.

use std::path::PathBuf;

fn render(template: &str, name: &str) -> String {
    template.replace("{name}", name)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let path = PathBuf::from(args.get(1).expect("template path"));
    let template = std::fs::read_to_string(path).expect("readable template");
    println!("{}", render(&template, "world"));
}
