from .gaussian import GaussianBase
from .flow import SplineFlow, flow_forward, flow_inverse
from .squash import SquashMap
from .policies import FlowPolicy, PolicySample, build_policy, build_policies
