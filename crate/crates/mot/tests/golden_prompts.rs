mod common;

use common::*;
use mot_core::retrieval::{parse_retrieval_choice, render_retrieval_prompt};

fn first_difference(a: &str, b: &str) -> usize {
    a.bytes().zip(b.bytes()).take_while(|(x, y)| x == y).count()
}

#[test]
fn few_shot_prompts_match_golden_files() {
    for set in FEW_SHOT_SETS {
        let rendered = render_few_shot(set);
        let expected = golden(&format!("few_shot_cot_{set}.txt"));
        assert!(
            rendered == expected,
            "{set}: first difference at byte {}",
            first_difference(&rendered, &expected)
        );
    }
}

#[test]
fn prompt_goldens_end_with_open_answer() {
    for set in FEW_SHOT_SETS {
        let text = golden(&format!("few_shot_cot_{set}.txt"));
        assert!(text.ends_with("\nA:"), "{set}");
        assert!(!text.contains("\n\n\n"), "{set}");
    }
}

#[test]
fn retrieval_prompt_with_ten_candidates() {
    let rendered = render_retrieval_10();
    let expected = golden("retrieval_10.txt");
    assert!(
        rendered == expected,
        "first difference at byte {}",
        first_difference(&rendered, &expected)
    );
}

#[test]
fn retrieval_prompt_with_one_candidate() {
    let input: RetrievalInput = serde_json::from_str(&golden("retrieval_10_input.json")).unwrap();
    let rendered = render_retrieval_prompt(&input.target, &input.candidates[9..])
        .unwrap()
        .rendered_text;
    assert_eq!(rendered, golden("retrieval_1.txt"));
}

#[test]
fn retrieval_output_parses_to_ten() {
    let output = golden("retrieval_10_output.txt");
    assert_eq!(parse_retrieval_choice(output.trim(), 10), Some(10));
    assert_eq!(parse_retrieval_choice(output.trim(), 9), None);
}
