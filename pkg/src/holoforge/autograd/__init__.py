from holoforge.autograd.tensor import Tensor, Parameter, Tape, backward, no_grad, grad_enabled
from holoforge.autograd import ops

__all__ = ["Tensor", "Parameter", "Tape", "backward", "no_grad", "grad_enabled", "ops"]
