//! Hard-label distillation objective.

use mfvit_tensor::{Element, Tensor};

use crate::error::{FusionError, Result};

/// One student/teacher batch. Teacher logits are plain values (no graph);
/// gradients flow through the student logits only.
pub struct DistillBatch<E: Element> {
    pub student_logits: Tensor<E>,
    pub teacher_logits_cxr: Tensor<E>,
    pub teacher_logits_enh: Tensor<E>,
    pub labels: Vec<usize>,
}

/// Row-wise argmax of a logit matrix: the teachers' generated labels.
pub fn teacher_labels<E: Element>(logits: &Tensor<E>) -> Vec<usize> {
    let (rows, cols) = (logits.rows(), logits.cols());
    let v = logits.value_vec();
    (0..rows)
        .map(|i| {
            let row = &v[i * cols..(i + 1) * cols];
            let mut best = 0usize;
            for j in 1..cols {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

impl<E: Element> DistillBatch<E> {
    pub fn new(
        student_logits: Tensor<E>,
        teacher_logits_cxr: Tensor<E>,
        teacher_logits_enh: Tensor<E>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let shape = student_logits.shape().to_vec();
        if teacher_logits_cxr.shape() != shape || teacher_logits_enh.shape() != shape {
            return Err(FusionError::Dimension(format!(
                "teacher logits must share the student shape {shape:?}"
            )));
        }
        if labels.len() != student_logits.rows() {
            return Err(FusionError::Dimension(format!(
                "{} labels for a batch of {}",
                labels.len(),
                student_logits.rows()
            )));
        }
        Ok(DistillBatch {
            student_logits,
            teacher_logits_cxr,
            teacher_logits_enh,
            labels,
        })
    }
}

/// L = ⅓·CE(ψ(Z_s), y) + ⅓·CE(ψ(Z_s), y_t_cxr) + ⅓·CE(ψ(Z_s), y_t_enh)
/// with y_t = argmax of the (gradient-free) teacher logits.
pub fn hard_distill_loss<E: Element>(batch: &DistillBatch<E>) -> Result<Tensor<E>> {
    let y_cxr = teacher_labels(&batch.teacher_logits_cxr);
    let y_enh = teacher_labels(&batch.teacher_logits_enh);
    let third = E::from_f64(1.0 / 3.0);
    let l_true = batch.student_logits.cross_entropy(&batch.labels)?;
    let l_cxr = batch.student_logits.cross_entropy(&y_cxr)?;
    let l_enh = batch.student_logits.cross_entropy(&y_enh)?;
    Ok(l_true.add(&l_cxr)?.add(&l_enh)?.scale(third))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mfvit_tensor::testutil::pseudo_random;

    fn logits(rows: usize, seed: u64) -> Tensor<f64> {
        Tensor::from_vec(&[rows, 3], pseudo_random(rows * 3, seed)).unwrap()
    }

    #[test]
    fn teacher_labels_are_argmax_rows() {
        let t = Tensor::from_vec(&[2, 3], vec![0.1, 0.9, 0.3, 2.0, -1.0, 1.5]).unwrap();
        assert_eq!(teacher_labels(&t), vec![1, 0]);
    }

    #[test]
    fn agreeing_teachers_reduce_to_plain_ce() {
        let student = Tensor::param(&[4, 3], pseudo_random(12, 1)).unwrap();
        let labels = vec![0usize, 1, 2, 1];
        // teachers that argmax exactly to the true labels
        let mut t = vec![0.0; 12];
        for (i, &l) in labels.iter().enumerate() {
            t[i * 3 + l] = 5.0;
        }
        let teach = Tensor::from_vec(&[4, 3], t).unwrap();
        let batch = DistillBatch::new(
            student.clone(),
            teach.clone(),
            teach.clone(),
            labels.clone(),
        )
        .unwrap();
        let distill = hard_distill_loss(&batch).unwrap();
        let plain = student.cross_entropy(&labels).unwrap();
        assert!((distill.item() - plain.item()).abs() < 1e-9);

        // gradients also coincide
        distill.backward().unwrap();
        let g_distill = student.grad().unwrap();
        student.zero_grad();
        plain.backward().unwrap();
        let g_plain = student.grad().unwrap();
        for (a, b) in g_distill.iter().zip(&g_plain) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_student_gives_ln3() {
        let student = Tensor::<f64>::zeros(&[5, 3]);
        let batch =
            DistillBatch::new(student, logits(5, 2), logits(5, 3), vec![0, 1, 2, 0, 1]).unwrap();
        let loss = hard_distill_loss(&batch).unwrap();
        assert!((loss.item() - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn teachers_receive_no_gradient() {
        let student = Tensor::param(&[3, 3], pseudo_random(9, 4)).unwrap();
        let t_cxr = Tensor::param(&[3, 3], pseudo_random(9, 5))
            .unwrap()
            .detach();
        let t_enh = Tensor::param(&[3, 3], pseudo_random(9, 6))
            .unwrap()
            .detach();
        let batch = DistillBatch::new(student.clone(), t_cxr.clone(), t_enh.clone(), vec![0, 1, 2])
            .unwrap();
        hard_distill_loss(&batch).unwrap().backward().unwrap();
        assert!(student.grad().is_some());
        assert!(t_cxr.grad().is_none());
        assert!(t_enh.grad().is_none());
    }

    #[test]
    fn loss_is_shift_invariant_in_student_logits() {
        let data = pseudo_random(12, 7);
        let student = Tensor::from_vec(&[4, 3], data.clone()).unwrap();
        let shifted = Tensor::from_vec(&[4, 3], data.iter().map(|v| v + 3.7).collect()).unwrap();
        let labels = vec![2usize, 0, 1, 1];
        let t1 = logits(4, 8);
        let t2 = logits(4, 9);
        let a = hard_distill_loss(
            &DistillBatch::new(student, t1.clone(), t2.clone(), labels.clone()).unwrap(),
        )
        .unwrap()
        .item();
        let b = hard_distill_loss(&DistillBatch::new(shifted, t1, t2, labels).unwrap())
            .unwrap()
            .item();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn loss_is_batch_permutation_equivariant() {
        let data = pseudo_random(12, 10);
        let perm = [2usize, 0, 3, 1];
        let permute = |v: &[f64]| -> Vec<f64> {
            perm.iter()
                .flat_map(|&i| v[i * 3..(i + 1) * 3].to_vec())
                .collect()
        };
        let labels = vec![0usize, 1, 2, 0];
        let t1 = pseudo_random(12, 11);
        let t2 = pseudo_random(12, 12);
        let a = hard_distill_loss(
            &DistillBatch::new(
                Tensor::from_vec(&[4, 3], data.clone()).unwrap(),
                Tensor::from_vec(&[4, 3], t1.clone()).unwrap(),
                Tensor::from_vec(&[4, 3], t2.clone()).unwrap(),
                labels.clone(),
            )
            .unwrap(),
        )
        .unwrap()
        .item();
        let b = hard_distill_loss(
            &DistillBatch::new(
                Tensor::from_vec(&[4, 3], permute(&data)).unwrap(),
                Tensor::from_vec(&[4, 3], permute(&t1)).unwrap(),
                Tensor::from_vec(&[4, 3], permute(&t2)).unwrap(),
                perm.iter().map(|&i| labels[i]).collect(),
            )
            .unwrap(),
        )
        .unwrap()
        .item();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let student = Tensor::<f64>::zeros(&[2, 3]);
        let bad = Tensor::<f64>::zeros(&[3, 3]);
        assert!(DistillBatch::new(student, bad.clone(), bad, vec![0, 1]).is_err());
    }
}
