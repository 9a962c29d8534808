//! Compares tape gradients with central finite differences, first for a raw
//! expression and then for a full pipeline loss.

use milcap::bagio::{generate_bag, SyntheticSpec};
use milcap::heads::Task;
use milcap::numerics::{check_gradients, check_store_gradients, Matrix, DEFAULT_STEP};
use milcap::trainer::{target_for, Mode, Pipeline, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = Matrix::from_rows(&[vec![0.3, -1.2], vec![0.8, 0.5]])?;
    let b = Matrix::from_rows(&[vec![1.0], vec![-0.4]])?;
    let r = check_gradients(&[a, b], DEFAULT_STEP, |_, v| Ok(v[0].matmul(v[1])?.sigmoid().log()?.sum()))?;
    println!("log(sigmoid(A B)): max relative error {:.2e}", r.max_rel_err);

    let spec = SyntheticSpec {
        region_count: 3,
        copies_per_region: 2,
        d_v: 5,
        seed: 4,
        ..SyntheticSpec::default()
    };
    let record = generate_bag(&spec)?.record;
    let config = TrainConfig {
        k: 3,
        d_out: 6,
        hidden: 5,
        ..TrainConfig::default()
    };
    let pipeline = Pipeline::new(config, record.d_v(), None)?;
    let target = target_for(&record, Task::Classify, None)?.expect("synthetic bags are labelled");
    let ids: Vec<_> = pipeline.store.ids().collect();
    let r = check_store_gradients(&pipeline.store, &ids, 6, DEFAULT_STEP, |t, b| {
        Ok(pipeline.bag_loss(b, t, &record.embeddings, &target, Mode::Train { seed: 1 })?.total)
    })?;
    // sel.* reads zero: the representative is a hard argmax, so no task gradient reaches it
    println!("total loss over {} parameter tensors: max relative error {:.2e}", ids.len(), r.max_rel_err);
    for (id, err) in ids.iter().zip(&r.per_tensor) {
        println!("  {:<14} {err:.2e}", pipeline.store.name(*id));
    }
    Ok(())
}
