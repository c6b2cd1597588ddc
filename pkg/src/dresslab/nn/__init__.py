from .tensor import (Tensor, concat, constant, exp, gather, gather_points,
                     log, maximum_axis, no_grad, parameter, relu, softplus,
                     stack, tanh, where)
from .store import CheckpointError, ParameterStore
from .layers import (MLP, FeaturePropagation, FiLMBlock, Linear,
                     SetAbstraction, build_structure, gaussian_log_prob,
                     gaussian_log_prob_np, gaussian_sample,
                     LOG_STD_MIN, LOG_STD_MAX)
from .pointnet import (FORCE_MODES, PointNetConfig, PointNetPolicy,
                       PointNetScalar, ee_indices)
from .gradcheck import (check_gradient, check_param_gradients, max_rel_error,
                        numeric_gradient)
