//! Deterministic synthetic sample corpus.
//!
//! Generates clean elementary-math records for demos and self-contained
//! verification runs. Every record carries a unique three-character school
//! name drawn from a dedicated alphabet that appears nowhere else in the
//! templates (and exactly once per answer), so no record's normalized
//! answer can be a subsequence of another record's — matching results
//! against a degraded copy of the corpus are therefore unambiguous ground
//! truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Record, Source};

/// School-name alphabet: 32 surname characters kept out of all template
/// bodies (and distinct from the 十 inserted by symbol substitution).
const SCHOOL_ALPHABET: [char; 32] = [
    '赵', '钱', '孙', '李', '吴', '郑', '冯', '陈', '褚', '卫', '蒋', '沈', '韩', '杨', '秦',
    '尤', '许', '吕', '施', '曹', '严', '魏', '陶', '姜', '戚', '谢', '邹', '喻', '柏', '窦',
    '苏', '潘',
];

fn school_name(index: usize) -> String {
    let a = SCHOOL_ALPHABET[(index / 1024) % 32];
    let b = SCHOOL_ALPHABET[(index / 32) % 32];
    let c = SCHOOL_ALPHABET[index % 32];
    format!("{a}{b}{c}")
}

struct Problem {
    question: String,
    answer: String,
    grade: u8,
}

fn build_problem(template: usize, school: &str, rng: &mut ChaCha8Rng) -> Problem {
    match template % 8 {
        0 => {
            // Increase by a unit fraction; answer works back to last year.
            let n = [4u64, 5, 7, 9][rng.gen_range(0..4)];
            let k = rng.gen_range(100..500) * 4;
            let last_year = n * k;
            let this_year = k * (n + 1);
            Problem {
                question: format!(
                    "{school}小学饲养场今年养鸡{this_year}只，比去年增加$\\frac{{1}}{{{n}}}$，去年养鸡多少只？"
                ),
                answer: format!(
                    "解：{this_year}÷（1+$\\frac{{1}}{{{n}}}$）\n={this_year}÷$\\frac{{{}}}{{{n}}}$\n={last_year}（只）\n答：{school}小学饲养场去年养鸡{last_year}只．",
                    n + 1
                ),
                grade: 6,
            }
        }
        1 => {
            let a = rng.gen_range(40..140);
            let b = rng.gen_range(30..90);
            let c = a * b;
            Problem {
                question: format!("{school}小学的操场长{a}米，宽{b}米，操场的面积是多少平方米？"),
                answer: format!(
                    "解：{a}×{b}={c}（平方米）\n答：{school}小学操场的面积是{c}平方米．"
                ),
                grade: 3,
            }
        }
        2 => {
            let a = rng.gen_range(5..30);
            let c = a * a;
            Problem {
                question: format!("{school}小学的花坛是边长{a}米的正方形，面积是多少平方米？"),
                answer: format!(
                    "解：正方形面积为边长的平方，即{a}^{{2}}={c}\n{a}×{a}={c}（平方米）\n答：{school}小学花坛的面积是{c}平方米．"
                ),
                grade: 4,
            }
        }
        3 => {
            let a = rng.gen_range(20..80);
            let b = rng.gen_range(20..80);
            let c = a + b;
            Problem {
                question: format!("{school}小学二年级有男生{a}人，女生{b}人，二年级一共有多少人？"),
                answer: format!("解：{a}+{b}={c}（人）\n答：{school}小学二年级一共有{c}人．"),
                grade: 1,
            }
        }
        4 => {
            let m = [3u64, 4, 5, 8][rng.gen_range(0..4)];
            let n = rng.gen_range(1..m);
            let k = rng.gen_range(20..90);
            let a = m * k;
            let c = n * k;
            Problem {
                question: format!(
                    "{school}小学食堂买来大米{a}千克，第一周用去这批大米的$\\frac{{{n}}}{{{m}}}$，第一周用去多少千克？"
                ),
                answer: format!(
                    "解：{a}×$\\frac{{{n}}}{{{m}}}$\n={a}÷{m}×{n}\n={c}（千克）\n答：{school}小学食堂第一周用去{c}千克．"
                ),
                grade: 5,
            }
        }
        5 => {
            let v10 = rng.gen_range(30..90) * 10 + 5;
            let t = rng.gen_range(1..5) * 2;
            let c = v10 * t / 10;
            Problem {
                question: format!(
                    "一辆汽车从{school}小学出发，每小时行驶{}.{}千米，{t}小时一共行驶多少千米？",
                    v10 / 10,
                    v10 % 10
                ),
                answer: format!(
                    "解：{}.{}×{t}={c}（千米）\n答：从{school}小学出发{t}小时一共行驶{c}千米．",
                    v10 / 10,
                    v10 % 10
                ),
                grade: 5,
            }
        }
        6 => {
            let k = rng.gen_range(2..7);
            let c = (1u64 << k) + 1;
            Problem {
                question: format!(
                    "把一根绳子对折{k}次后从中间剪一刀，绳子变成多少段？（{school}小学思考题）"
                ),
                answer: format!(
                    "解：对折{k}次从中间剪一刀，有2^{{{k}}}+1={c}（段）\n答：{school}小学思考题的结果是{c}段．"
                ),
                grade: 6,
            }
        }
        _ => {
            let p = rng.gen_range(3..15);
            let n = rng.gen_range(5..40);
            let c = p * n;
            Problem {
                question: format!("{school}小学购买文具，一支钢笔{p}元，买{n}支需要多少元？"),
                answer: format!("解：{p}×{n}={c}（元）\n答：{school}小学需要{c}元．"),
                grade: 2,
            }
        }
    }
}

/// Generates `n` clean seed records, reproducible from `rng_seed`.
pub fn synthetic_seed_corpus(n: usize, rng_seed: u64) -> Corpus {
    assert!(n <= 32 * 32 * 32, "school-name space exhausted");
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ (i as u64).wrapping_mul(0x9E37_79B9));
        let school = school_name(i);
        let problem = build_problem(i, &school, &mut rng);
        debug_assert_eq!(
            problem.answer.matches(&school).count(),
            1,
            "school code must appear exactly once in the answer"
        );
        let record = Record::new(
            format!("sample-{i:05}"),
            problem.question,
            problem.answer,
            Source::Seed,
        )
        .with_meta("grade", &problem.grade.to_string());
        records.push(record);
    }
    Corpus::from_records(records, Source::Seed, format!("synthetic:{n}:{rng_seed}")).unwrap()
}
