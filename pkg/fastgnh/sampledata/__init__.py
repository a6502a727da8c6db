from .networks import NetworkSpec, load_network_spec, random_network
from .synthetic import gen_synthetic, synthetic_batch
