//! Scores predictions with the classification and caption metrics.

use milcap::metrics::{auc, caption_metrics, classification_metrics};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scores = [0.92, 0.81, 0.40, 0.35, 0.65, 0.10];
    let labels = [true, true, false, true, false, false];
    let m = classification_metrics(&scores, &labels, 0.5)?;
    println!("precision {:.3} recall {:.3} f1 {:.3} auc {:.3}", m.precision, m.recall, m.f1, m.auc);
    // AUC only depends on the ranking
    let squashed: Vec<f64> = scores.iter().map(|s: &f64| s.powi(3)).collect();
    assert_eq!(auc(&squashed, &labels)?, m.auc);

    let candidates = ["benign mucosa".to_string(), "adenocarcinoma with one atypical focus".into()];
    let references = ["benign regular mucosa".to_string(), "adenocarcinoma with one atypical focus".into()];
    let c = caption_metrics(&candidates, &references);
    println!("BLEU@1..4 {:.4?}", c.bleu);
    println!("ROUGE-L {:.4} CIDEr {:.4}", c.rouge_l, c.cider);
    Ok(())
}
