use std::collections::{HashMap, HashSet};

use super::{set_grad_enabled, Tensor};
use crate::error::{Result, StaError};

/// Nodes reachable from `root` through recorded ops, parents before children.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(op) = t.op() {
            for p in op.parents() {
                if p.requires_grad() && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }
    order
}

/// Gradient of a scalar `output` with respect to each of `inputs`.
///
/// With `create_graph` the returned tensors carry their own graph records and
/// can be differentiated again. Inputs that `output` does not depend on get a
/// zero tensor of their shape.
pub fn grad(output: &Tensor, inputs: &[Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
    if output.numel() != 1 {
        return Err(StaError::NonScalarOutput(output.shape().to_vec()));
    }
    let order = topo_order(output);
    let input_ids: HashSet<u64> = inputs.iter().map(Tensor::id).collect();

    // A node is needed when some input is reachable from it through parents.
    let mut needed: HashSet<u64> = HashSet::new();
    for t in &order {
        let mut need = input_ids.contains(&t.id());
        if !need {
            if let Some(op) = t.op() {
                need = op.parents().iter().any(|p| needed.contains(&p.id()));
            }
        }
        if need {
            needed.insert(t.id());
        }
    }

    let _mode = set_grad_enabled(create_graph);
    let mut grads: HashMap<u64, Tensor> = HashMap::new();
    let mut found: HashMap<u64, Tensor> = HashMap::new();
    if needed.contains(&output.id()) {
        grads.insert(output.id(), Tensor::ones(output.shape()));
    }

    for node in order.iter().rev() {
        let Some(g) = grads.remove(&node.id()) else {
            continue;
        };
        if input_ids.contains(&node.id()) {
            found.insert(node.id(), g.clone());
        }
        let Some(op) = node.op() else { continue };
        let parents = op.parents();
        let needs: Vec<bool> = parents.iter().map(|p| needed.contains(&p.id())).collect();
        if !needs.iter().any(|&n| n) {
            continue;
        }
        let pgrads = op.backward(node, &g, &needs)?;
        for ((p, pg), need) in parents.iter().zip(pgrads).zip(needs) {
            let (Some(pg), true) = (pg, need) else { continue };
            let acc = match grads.remove(&p.id()) {
                Some(prev) => prev.add(&pg)?,
                None => pg,
            };
            grads.insert(p.id(), acc);
        }
    }

    Ok(inputs
        .iter()
        .map(|t| {
            found
                .get(&t.id())
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Tensor {
        Tensor::leaf(vec![v], &[]).unwrap()
    }

    #[test]
    fn square_derivative() {
        let x = s(3.0);
        let y = x.square().unwrap();
        let g = grad(&y, &[x], false).unwrap();
        assert_eq!(g[0].item(), 6.0);
    }

    #[test]
    fn cube_second_derivative() {
        let x = s(2.0);
        let y = x.mul(&x).unwrap().mul(&x).unwrap();
        let g = grad(&y, &[x.clone()], true).unwrap();
        assert_eq!(g[0].item(), 12.0);
        let gg = grad(&g[0], &[x], false).unwrap();
        assert_eq!(gg[0].item(), 12.0);
    }

    #[test]
    fn product_partials() {
        let (x, y) = (s(2.0), s(5.0));
        let f = x.mul(&y).unwrap();
        let g = grad(&f, &[x, y], false).unwrap();
        assert_eq!((g[0].item(), g[1].item()), (5.0, 2.0));
    }

    #[test]
    fn unreachable_input_is_zero() {
        let x = s(1.0);
        let other = Tensor::leaf(vec![1.0, 2.0], &[2]).unwrap();
        let f = x.square().unwrap();
        let g = grad(&f, &[other], false).unwrap();
        assert_eq!(g[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let x = Tensor::leaf(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(
            grad(&x, &[x.clone()], false),
            Err(StaError::NonScalarOutput(_))
        ));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let x = Tensor::leaf(vec![0.3, -1.0, 4.0, 2.0], &[2, 2]).unwrap();
        let g = grad(&x.sum().unwrap(), &[x], false).unwrap();
        assert_eq!(g[0].data(), &[1.0; 4]);
    }

    #[test]
    fn shared_subexpression_visited_once() {
        // f = (x+x)·(x+x) = 4x², f' = 8x
        let x = s(1.5);
        let y = x.add(&x).unwrap();
        let f = y.mul(&y).unwrap();
        let g = grad(&f, &[x], false).unwrap();
        assert_eq!(g[0].item(), 12.0);
    }

    #[test]
    fn quadratic_hessian_vector_product_is_identity() {
        // u = ½‖z‖² ⇒ grad(∇u·v) = v
        let z = Tensor::leaf(vec![0.3, -1.2, 2.0, 0.7], &[4]).unwrap();
        let v = Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0], &[4]).unwrap();
        let u = z.square().unwrap().sum().unwrap().scale(0.5).unwrap();
        let gu = grad(&u, &[z.clone()], true).unwrap();
        let hv = grad(&gu[0].mul(&v).unwrap().sum().unwrap(), &[z], false).unwrap();
        assert_eq!(hv[0].data(), v.data());
    }

    #[test]
    fn first_order_results_are_not_recorded() {
        let x = s(2.0);
        let g = grad(&x.square().unwrap(), &[x.clone()], false).unwrap();
        assert!(!g[0].requires_grad());
        let g = grad(&x.square().unwrap(), &[x], true).unwrap();
        assert!(g[0].requires_grad());
    }
}
