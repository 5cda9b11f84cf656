"""
Tape
====
Reverse-mode replay over the graph reachable from a scalar loss.
"""

from typing import Dict, Iterable, List, Optional

import numpy as np

from tensorcore.tensor import Tensor


class Tape:
    """Primitive records in topological order (inputs before outputs)."""

    def __init__(self, loss: Tensor):
        self.loss = loss
        self.nodes: List[Tensor] = self._topological_order(loss)

    @staticmethod
    def _topological_order(root: Tensor) -> List[Tensor]:
        order, visited = [], set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def leaves(self) -> List[Tensor]:
        return [n for n in self.nodes if n.is_leaf and n.requires_grad]

    def replay(self, seed: np.ndarray) -> Dict[Tensor, np.ndarray]:
        """Propagate `seed` from the loss back to every differentiable leaf."""
        adjoints = {id(self.loss): seed}
        leaf_grads: Dict[Tensor, np.ndarray] = {}
        for node in reversed(self.nodes):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                leaf_grads[node] = g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                adjoints[key] = adjoints[key] + pg if key in adjoints else pg
        return leaf_grads


def backward(loss: Tensor, params: Optional[Iterable[Tensor]] = None,
             accumulate: bool = True) -> Dict[Tensor, np.ndarray]:
    """
    Differentiate a scalar loss.

    Args:
        loss: scalar tensor
        params: leaves to report; those off the path get zero adjoints.
            Defaults to every differentiable leaf on the tape.
        accumulate: also add the adjoints into each leaf's `.grad`

    Returns:
        Mapping leaf tensor -> gradient array
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        grads = {}
    else:
        tape = Tape(loss)
        grads = tape.replay(np.ones_like(loss.data))

    if params is not None:
        grads = {p: grads.get(p, np.zeros_like(p.data)) for p in params}

    if accumulate:
        for leaf, g in grads.items():
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
    return grads
