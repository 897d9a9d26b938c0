use std::cell::RefCell;

use super::Tensor;
use crate::error::{Error, Result};

/// Receives the output gradient and, per input, whether that input is tracked.
/// Returns one optional gradient per input, in input order.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct NodeRef {
    generation: u64,
    index: usize,
}

struct Node {
    inputs: Vec<Option<usize>>,
    backward: Option<BackwardFn>,
    /// Set for gradient leaves; receives the accumulated gradient.
    leaf: Option<Tensor>,
}

#[derive(Default)]
struct Tape {
    generation: u64,
    nodes: Vec<Node>,
    paused: usize,
}

thread_local! {
    static TAPE: RefCell<Tape> = RefCell::new(Tape::default());
}

impl Tape {
    fn node_of(&mut self, t: &Tensor) -> Result<Option<usize>> {
        match t.node() {
            Some(n) if n.generation == self.generation => Ok(Some(n.index)),
            Some(_) if !t.is_param() => Err(Error::TapeConsumed),
            _ if t.is_param() => {
                let index = self.nodes.len();
                self.nodes.push(Node {
                    inputs: Vec::new(),
                    backward: None,
                    leaf: Some(t.clone()),
                });
                t.set_node(Some(NodeRef {
                    generation: self.generation,
                    index,
                }));
                Ok(Some(index))
            }
            _ => Ok(None),
        }
    }

    fn clear(&mut self) -> Vec<Node> {
        self.generation += 1;
        std::mem::take(&mut self.nodes)
    }
}

/// Wraps freshly computed values into a tensor, recording the operation when
/// recording is enabled and any input is tracked.
pub(crate) fn record<F>(values: Vec<f64>, shape: Vec<usize>, inputs: &[&Tensor], backward: F) -> Result<Tensor>
where
    F: Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + 'static,
{
    TAPE.with(|tape| {
        let mut tape = tape.borrow_mut();
        if tape.paused > 0 {
            return Ok(Tensor::from_op(values, shape, None));
        }
        let ids = inputs.iter().map(|t| tape.node_of(t)).collect::<Result<Vec<_>>>()?;
        if ids.iter().all(Option::is_none) {
            return Ok(Tensor::from_op(values, shape, None));
        }
        let index = tape.nodes.len();
        tape.nodes.push(Node {
            inputs: ids,
            backward: Some(Box::new(backward)),
            leaf: None,
        });
        let node = NodeRef {
            generation: tape.generation,
            index,
        };
        Ok(Tensor::from_op(values, shape, Some(node)))
    })
}

pub(crate) fn backward(root: &Tensor) -> Result<()> {
    let node = root.node().ok_or(Error::NoActiveTape)?;
    if root.numel() != 1 {
        return Err(Error::NotScalar(root.shape().to_vec()));
    }
    let nodes = TAPE.with(|tape| {
        let mut tape = tape.borrow_mut();
        if node.generation != tape.generation {
            return Err(Error::TapeConsumed);
        }
        Ok(tape.clear())
    })?;

    let mut grads: Vec<Option<Vec<f64>>> = vec![None; node.index + 1];
    grads[node.index] = Some(vec![1.0]);
    for i in (0..=node.index).rev() {
        let Some(g) = grads[i].take() else { continue };
        let n = &nodes[i];
        if let Some(leaf) = &n.leaf {
            leaf.accumulate_grad(&g);
            continue;
        }
        let Some(bw) = &n.backward else { continue };
        let needs: Vec<bool> = n.inputs.iter().map(Option::is_some).collect();
        for (input, contribution) in n.inputs.iter().zip(bw(&g, &needs)) {
            let (Some(j), Some(c)) = (input, contribution) else { continue };
            match &mut grads[*j] {
                Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, v)| *a += v),
                slot => *slot = Some(c),
            }
        }
    }
    Ok(())
}

/// Discards everything recorded so far on this thread's tape.
pub fn reset() {
    TAPE.with(|tape| {
        tape.borrow_mut().clear();
    });
}

/// Runs `f` with recording disabled. Results are plain constants.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    struct Resume;
    impl Drop for Resume {
        fn drop(&mut self) {
            TAPE.with(|tape| tape.borrow_mut().paused -= 1);
        }
    }
    TAPE.with(|tape| tape.borrow_mut().paused += 1);
    let _resume = Resume;
    f()
}

pub fn is_recording() -> bool {
    TAPE.with(|tape| tape.borrow().paused == 0)
}

impl Tensor {
    /// Back-propagates from a scalar root, accumulating into every reachable
    /// gradient leaf, then clears the tape.
    pub fn backward(&self) -> Result<()> {
        backward(self)
    }
}
