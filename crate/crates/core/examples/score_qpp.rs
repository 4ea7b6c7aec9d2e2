//! The five score-distribution estimators on hand-made score lists.
//!
//! cargo run -p dq-core --example score_qpp

use dq_core::qpp::{self, QueryScoreList};
use dq_core::Method;

fn main() {
    let lists = [
        ("peaked", vec![9.0, 3.0, 2.9, 2.8, 2.8], 2.0),
        ("flat", vec![3.1, 3.0, 3.0, 2.9, 2.9], 2.0),
        ("hand", vec![3.0, 2.0, 1.0], 2.0),
    ];
    let methods = [
        Method::Nqc,
        Method::Smv,
        Method::Sigma,
        Method::Wig,
        Method::BinaryEntropy,
    ];
    print!("{:<8}", "list");
    for m in methods {
        print!("{:>16}", m.name());
    }
    println!();
    for (name, scores, mu) in lists {
        let q = QueryScoreList::new(name, scores, mu).unwrap();
        print!("{name:<8}");
        for m in methods {
            print!("{:>16.6}", qpp::estimator(m).unwrap()(&q));
        }
        println!();
    }
}
